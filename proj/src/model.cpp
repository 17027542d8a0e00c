#include "cdmamba/model.hpp"

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba {

ModelConfig ModelConfig::reduced() {
    ModelConfig cfg;
    cfg.stem_channels = 4;
    cfg.stage_channels = {4, 8, 8, 8};
    cfg.stage_depths = {1, 1, 1, 1};
    cfg.decoder_depths = {1, 1, 1};
    cfg.state_size = 2;
    return cfg;
}

void ModelConfig::validate() const {
    if (stage_channels.size() != kStages || stage_depths.size() != kStages) {
        throw ConfigError("stage_channels and stage_depths need exactly 4 entries");
    }
    if (decoder_depths.size() != kStages - 1) throw ConfigError("decoder_depths needs exactly 3 entries");
    for (std::size_t s : aglgf_stages) {
        if (s < 1 || s > kStages) throw ConfigError("aglgf_stages entries must lie in 1..4, got " + std::to_string(s));
    }
    if (input_channels < 1 || stem_channels < 1) throw ConfigError("input and stem channels must be >= 1");
    if (stem_kernel % 2 == 0) throw ConfigError("stem kernel must be odd");
    if (num_classes != 2) throw ConfigError("only binary change detection (num_classes = 2) is supported");
    for (std::size_t c : stage_channels) block(c, false).validate();
}

void ModelConfig::validate_input(std::size_t height, std::size_t width) const {
    if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
        throw ConfigError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not supported: height and width must be >= 8 and divisible by 8");
    }
}

BlockConfig ModelConfig::block(std::size_t d_model, bool separable) const {
    BlockConfig b;
    b.d_model = d_model;
    b.expansion = expansion;
    b.conv1d_kernel = conv1d_kernel;
    b.conv2d_kernel = conv2d_kernel;
    b.state_size = state_size;
    b.ssm_skip = ssm_skip;
    b.gate = gate;
    b.lgf_width = lgf_width;
    b.separable_conv = separable;
    return b;
}

CdMamba CdMamba::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    CdMamba m;
    m.cfg_ = cfg;
    m.stem_ = Conv2d::init(cfg.input_channels, cfg.stem_channels, cfg.stem_kernel, rng);

    std::size_t prev = cfg.stem_channels;
    for (std::size_t i = 0; i < ModelConfig::kStages; ++i) {
        const std::size_t c = cfg.stage_channels[i];
        EncoderStage stage;
        if (c != prev) stage.channel_map = Conv2d::init(prev, c, 1, rng);
        for (std::size_t b = 0; b < cfg.stage_depths[i]; ++b) stage.blocks.push_back(Srcm::init(cfg.block(c, false), rng));
        m.encoder_.push_back(std::move(stage));
        prev = c;
    }
    for (std::size_t s : cfg.aglgf_stages) m.aglgf_.emplace(s, Aglgf::init(cfg.block(cfg.stage_channels[s - 1], false), rng));

    for (std::size_t j = 0; j + 1 < ModelConfig::kStages; ++j) {
        const std::size_t level = ModelConfig::kStages - 2 - j;  // 2, 1, 0
        const std::size_t c = cfg.stage_channels[level];
        DecoderStage stage;
        stage.fuse = Conv2d::init(cfg.stage_channels[level + 1] + c, c, 1, rng);
        for (std::size_t b = 0; b < cfg.decoder_depths[j]; ++b) stage.blocks.push_back(Srcm::init(cfg.block(c, true), rng));
        m.decoder_.push_back(std::move(stage));
    }
    m.head_ = Conv2d::init(cfg.stage_channels[0], cfg.num_classes, 1, rng);
    return m;
}

Tensor CdMamba::run_blocks(const std::vector<Srcm>& blocks, const Tensor& image) {
    if (blocks.empty()) return image;
    const TokenGrid grid{image.dim(1), image.dim(2)};
    Tensor tokens = ops::image_to_tokens(image);
    for (const auto& b : blocks) tokens = b(tokens, grid);
    return ops::tokens_to_image(tokens, grid.height, grid.width);
}

Tensor CdMamba::conv_stream(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != cfg_.input_channels) {
        throw InputError("conv_stream: expected [" + std::to_string(cfg_.input_channels) + ",H,W], got " +
                         to_string(image.shape()));
    }
    cfg_.validate_input(image.dim(1), image.dim(2));
    return stem_(image);
}

std::vector<Tensor> CdMamba::encode_single(const Tensor& image) const {
    Tensor x = conv_stream(image);
    std::vector<Tensor> features;
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        if (i > 0) x = ops::bilinear_resize(x, 1, 2);
        if (encoder_[i].channel_map) x = (*encoder_[i].channel_map)(x);
        x = run_blocks(encoder_[i].blocks, x);
        features.push_back(x);
    }
    return features;
}

StageFeatures CdMamba::encode(const Tensor& t1, const Tensor& t2) const {
    if (t1.shape() != t2.shape()) {
        throw InputError("bi-temporal images differ in shape: " + to_string(t1.shape()) + " vs " + to_string(t2.shape()));
    }
    return {encode_single(t1), encode_single(t2)};
}

std::vector<Tensor> CdMamba::diff_features(const StageFeatures& features) const {
    std::vector<Tensor> diffs;
    for (std::size_t i = 0; i < ModelConfig::kStages; ++i) {
        const Tensor& f1 = features.t1.at(i);
        const Tensor& f2 = features.t2.at(i);
        auto it = aglgf_.find(i + 1);
        if (it == aglgf_.end()) {
            diffs.push_back(ops::abs(ops::sub(f1, f2)));
            continue;
        }
        const TokenGrid grid{f1.dim(1), f1.dim(2)};
        auto [g1, g2] = it->second(ops::image_to_tokens(f1), ops::image_to_tokens(f2), grid);
        diffs.push_back(ops::tokens_to_image(ops::abs(ops::sub(g1, g2)), grid.height, grid.width));
    }
    return diffs;
}

Tensor CdMamba::decode(const std::vector<Tensor>& diffs) const {
    if (diffs.size() != ModelConfig::kStages) throw InputError("decoder expects 4 differential features");
    Tensor x = diffs.back();
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
        const Tensor& skip = diffs[ModelConfig::kStages - 2 - j];
        x = ops::bilinear_resize(x, 2, 1);
        if (x.dim(1) != skip.dim(1) || x.dim(2) != skip.dim(2)) {
            throw InputError("decoder: upsampled feature " + to_string(x.shape()) + " does not align with skip " +
                             to_string(skip.shape()));
        }
        x = decoder_[j].fuse(ops::concat({x, skip}, 0));
        x = run_blocks(decoder_[j].blocks, x);
    }
    return x;
}

Tensor CdMamba::forward(const Tensor& t1, const Tensor& t2) const {
    return head_(decode(diff_features(encode(t1, t2))));
}

ParamList CdMamba::parameters() const {
    ParamList out;
    stem_.collect("stem.", out);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        const std::string p = "encoder.stage" + std::to_string(i + 1) + ".";
        if (encoder_[i].channel_map) encoder_[i].channel_map->collect(p + "channel_map.", out);
        for (std::size_t b = 0; b < encoder_[i].blocks.size(); ++b) encoder_[i].blocks[b].collect(p + "srcm" + std::to_string(b) + ".", out);
    }
    for (const auto& [stage, block] : aglgf_) block.collect("aglgf.stage" + std::to_string(stage) + ".", out);
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
        const std::string p = "decoder.level" + std::to_string(ModelConfig::kStages - 1 - j) + ".";
        decoder_[j].fuse.collect(p + "fuse.", out);
        for (std::size_t b = 0; b < decoder_[j].blocks.size(); ++b) decoder_[j].blocks[b].collect(p + "srcm" + std::to_string(b) + ".", out);
    }
    head_.collect("head.", out);
    return out;
}

}  // namespace cdmamba
