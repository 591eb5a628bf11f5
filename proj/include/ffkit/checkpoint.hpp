#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ffkit/tensor.hpp"

namespace ffkit {

// Versioned container of named tensors with a manifest checksum (FNV-1a over
// the payload, appended at the end). metadata_json echoes the resolved run
// configuration of whatever produced the file.
struct Checkpoint {
    uint32_t version = 1;
    std::string metadata_json;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ffkit
