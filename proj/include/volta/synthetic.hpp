#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volta/error.hpp"

namespace volta {

// Desk-scale stand-in for the real corpora. Generation is a pure function of
// the spec.
struct SyntheticSpec {
    std::string task = "lm"; // lm | dialog | qag
    int n_contexts = 100;    // sentences (lm), dialogs (dialog), contexts (qag)
    std::uint64_t seed = 0;

    // qag knobs
    int spans_per_context = 4;
    int span_len = 1;
    int n_entities = 24;
    int values_per_field = 12;

    void validate() const;
};

// One training example in word form. For qag the target is the question and
// (span_s, span_e) are 1-based token positions of the answer inside the
// context. Dialog histories join turns with a literal "<sep>".
struct RawExample {
    int context_id = 0;
    std::vector<std::string> context;
    std::vector<std::string> target;
    int span_s = 0;
    int span_e = 0;
};

struct SyntheticCorpus {
    SyntheticSpec spec;
    std::vector<RawExample> examples;

    std::vector<std::string> all_texts() const;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

} // namespace volta
