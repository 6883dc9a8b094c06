#pragma once

#include <map>
#include <string>

#include "fgvi/core/tensor.hpp"

namespace fgvi::core {

// Versioned binary checkpoint: a JSON config snapshot plus named f64
// tensors. Round trips are bit-exact. Shared by every trainable network.
struct Checkpoint {
    std::string config_json;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fgvi::core
