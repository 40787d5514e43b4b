#pragma once

#include <string>
#include <vector>

#include "volta/train.hpp"

namespace volta {

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

struct CheckpointData {
    int version = 1;
    RunConfig config;
    std::vector<std::string> vocab;
    long long step = 0;
    std::vector<NamedTensor> tensors; // "param.<name>" and "opt.<buf>.<name>"
};

// Format: 8-byte magic, little-endian u64 header length, JSON header
// (version, step, config, vocab, tensor directory with offsets), then a
// contiguous little-endian float64 payload. save -> load -> save is
// byte-identical.
void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

} // namespace volta
