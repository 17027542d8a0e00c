#pragma once

#include <cstdint>
#include <string>

#include "cdmamba/model.hpp"
#include "cdmamba/train.hpp"

namespace cdmamba {

/// Everything a CLI run needs. File format: one `key = value` per line,
/// `#` starts a comment, blank lines ignored, unknown keys rejected.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;  // train.seed mirrors `seed`
    std::uint64_t seed = 0;

    std::string data_dir;         // A/ B/ label/ layout
    std::string split = "all";    // all | train | val | test (needs train.txt etc. in data_dir)
    std::size_t patch = 0;        // 0 keeps whole images
    bool strict_labels = false;

    bool synthetic = false;
    std::size_t n = 8;       // synthetic sample count
    std::size_t size = 32;   // synthetic image size

    std::string out_dir = "out";
    std::string checkpoint;  // eval/predict input

    /// Assigns one key; throws ConfigError naming the key on failure.
    void set(const std::string& key, const std::string& value);
    void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Every key with its current value, in a stable order; parses back to an
/// identical configuration.
std::string resolved_text(const RunConfig& cfg);

struct AblationVariant {
    std::string group;  // aglgf_stages | gate | lgf_dim | loss
    std::string name;
    RunConfig config;
};

/// The ablation sweep around `base`: AGLGF placement (none, then stages
/// added one at a time), the four gate activations, the three L-GF widths
/// and five (lambda1, lambda2) pairs.
std::vector<AblationVariant> ablation_variants(const RunConfig& base);

}  // namespace cdmamba
