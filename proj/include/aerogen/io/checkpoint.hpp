#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "aerogen/nn/tensor.hpp"

namespace aerogen {

// Versioned self-describing weight container: magic "AEROGEN\0", format
// version, a JSON header (kind, metadata, tensor directory) and raw
// little-endian float64 blobs.
struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;

    std::string kind;             // "denoiser", "label_model", "classifier", "detector"
    nlohmann::ordered_json meta;  // configs, schedule parameters, extras
    std::map<std::string, nn::Tensor> tensors;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace aerogen
