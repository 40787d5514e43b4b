#pragma once

#include <stdexcept>
#include <string>

namespace volta {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or axis disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-range index (token id, table row, span position).
class IndexError : public Error {
public:
    using Error::Error;
};

// Caller violated a stated precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// Input is structurally valid but empty/degenerate where content is required.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Operation invoked under the wrong architecture mode.
class ModeError : public Error {
public:
    using Error::Error;
};

// Sequence exceeds a configured length bound.
class LengthError : public Error {
public:
    using Error::Error;
};

// A verification harness could not trust its own probes.
class VerificationError : public Error {
public:
    using Error::Error;
};

// Token outside the model vocabulary.
class VocabularyError : public Error {
public:
    using Error::Error;
};

// Inconsistent synthetic-corpus specification.
class SpecError : public Error {
public:
    using Error::Error;
};

// Checkpoint/config file cannot be read back.
class LoadError : public Error {
public:
    using Error::Error;
};

} // namespace volta
