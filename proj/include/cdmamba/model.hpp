#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "cdmamba/blocks.hpp"

namespace cdmamba {

struct ModelConfig {
    std::size_t input_channels = 3;
    std::size_t stem_channels = 16;
    std::size_t stem_kernel = 3;
    std::vector<std::size_t> stage_channels{16, 32, 64, 128};
    std::vector<std::size_t> stage_depths{1, 2, 2, 4};
    std::vector<std::size_t> decoder_depths{1, 1, 1};
    std::set<std::size_t> aglgf_stages{1, 2};  // 1-based stage indices
    std::size_t num_classes = 2;

    std::size_t expansion = 2;
    std::size_t conv1d_kernel = 4;
    std::size_t conv2d_kernel = 3;
    std::size_t state_size = 16;
    bool ssm_skip = true;
    GateActivation gate = GateActivation::ReLU;
    LgfWidth lgf_width = LgfWidth::Two;

    static constexpr std::size_t kStages = 4;

    /// C = [4, 8, 8, 8], one SRCM per stage, state size 2.
    static ModelConfig reduced();

    void validate() const;
    /// Spatial sizes must survive three halvings.
    void validate_input(std::size_t height, std::size_t width) const;
    BlockConfig block(std::size_t d_model, bool separable) const;
};

/// Per-stage bi-temporal encoder outputs as images [C_i, H_i, W_i].
struct StageFeatures {
    std::vector<Tensor> t1;
    std::vector<Tensor> t2;
};

class CdMamba {
public:
    static CdMamba init(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }

    /// 3x3 stride-1 stem: [3,H,W] -> [stem_channels,H,W].
    Tensor conv_stream(const Tensor& image) const;
    /// Siamese encoder (shared weights) over both acquisitions.
    StageFeatures encode(const Tensor& t1, const Tensor& t2) const;
    std::vector<Tensor> encode_single(const Tensor& image) const;
    /// |AGLGF(F1,F2) difference| at fused stages, |F1 - F2| elsewhere.
    std::vector<Tensor> diff_features(const StageFeatures& features) const;
    /// Coarse-to-fine decoder: [C_1, H, W].
    Tensor decode(const std::vector<Tensor>& diffs) const;
    /// Unnormalized logits [num_classes, H, W].
    Tensor forward(const Tensor& t1, const Tensor& t2) const;

    ParamList parameters() const;
    std::size_t parameter_count() const { return count_parameters(parameters()); }

private:
    struct EncoderStage {
        std::optional<Conv2d> channel_map;  // 1x1, absent when widths already agree
        std::vector<Srcm> blocks;
    };
    struct DecoderStage {
        Conv2d fuse;  // 1x1 over [upsampled ; skip]
        std::vector<Srcm> blocks;
    };

    static Tensor run_blocks(const std::vector<Srcm>& blocks, const Tensor& image);

    ModelConfig cfg_;
    Conv2d stem_;
    std::vector<EncoderStage> encoder_;
    std::map<std::size_t, Aglgf> aglgf_;  // keyed by 1-based stage
    std::vector<DecoderStage> decoder_;   // coarsest first
    Conv2d head_;
};

}  // namespace cdmamba
