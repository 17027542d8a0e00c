#include "cdmamba/blocks.hpp"

#include <algorithm>
#include <cctype>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba {

const char* to_string(GateActivation g) {
    switch (g) {
        case GateActivation::ReLU: return "relu";
        case GateActivation::SiLU: return "silu";
        case GateActivation::LeakyReLU: return "leaky_relu";
        case GateActivation::Sigmoid: return "sigmoid";
    }
    return "?";
}

GateActivation parse_gate_activation(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "relu") return GateActivation::ReLU;
    if (s == "silu") return GateActivation::SiLU;
    if (s == "leaky_relu" || s == "leakyrelu") return GateActivation::LeakyReLU;
    if (s == "sigmoid") return GateActivation::Sigmoid;
    throw ConfigError("unknown gate activation '" + name + "' (expected relu, silu, leaky_relu or sigmoid)");
}

Tensor apply_gate(const Tensor& x, GateActivation g) {
    switch (g) {
        case GateActivation::ReLU: return ops::relu(x);
        case GateActivation::SiLU: return ops::silu(x);
        case GateActivation::LeakyReLU: return ops::leaky_relu(x);
        case GateActivation::Sigmoid: return ops::sigmoid(x);
    }
    throw ConfigError("invalid gate activation");
}

const char* to_string(LgfWidth w) {
    switch (w) {
        case LgfWidth::One: return "1";
        case LgfWidth::OneAndHalf: return "1.5";
        case LgfWidth::Two: return "2";
    }
    return "?";
}

LgfWidth parse_lgf_width(const std::string& text) {
    if (text == "1" || text == "1.0") return LgfWidth::One;
    if (text == "1.5") return LgfWidth::OneAndHalf;
    if (text == "2" || text == "2.0") return LgfWidth::Two;
    throw ConfigError("lgf_dim_multiplier must be one of 1, 1.5, 2; got '" + text + "'");
}

std::size_t lgf_channels(LgfWidth w, std::size_t d_model) {
    switch (w) {
        case LgfWidth::One: return d_model;
        case LgfWidth::OneAndHalf: return d_model * 3 / 2;
        case LgfWidth::Two: return 2 * d_model;
    }
    return d_model;
}

void BlockConfig::validate() const {
    if (d_model < 2 || d_model % 2 != 0) {
        throw ConfigError("block d_model must be even and >= 2 (channels are split in half), got " + std::to_string(d_model));
    }
    if (expansion < 1) throw ConfigError("expansion factor must be >= 1");
    if (conv1d_kernel < 1) throw ConfigError("conv1d kernel must be >= 1");
    if (conv2d_kernel < 1 || conv2d_kernel % 2 == 0) throw ConfigError("conv2d kernel must be odd");
    if (state_size < 1) throw ConfigError("state size must be >= 1");
}

namespace {

void check_tokens(const char* block, const Tensor& x, std::size_t channels, TokenGrid grid) {
    if (x.rank() != 2 || x.dim(1) != channels) {
        throw InputError(std::string(block) + ": expected [L," + std::to_string(channels) + "] tokens, got " +
                         to_string(x.shape()));
    }
    if (x.dim(0) != grid.tokens()) {
        throw InputError(std::string(block) + ": " + std::to_string(x.dim(0)) + " tokens do not form a " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
    }
}

// Applies two spatial convolutions with a SiLU between them to tokens laid out on `grid`.
Tensor local_path(const SpatialConv& first, const SpatialConv& second, const Tensor& tokens, TokenGrid grid) {
    Tensor img = ops::tokens_to_image(tokens, grid.height, grid.width);
    return ops::image_to_tokens(second(ops::silu(first(img))));
}

}  // namespace

MambaBranch MambaBranch::init(std::size_t in, std::size_t inner, const BlockConfig& cfg, Rng& rng) {
    MambaBranch b;
    b.in_proj = Linear::init(in, inner, rng);
    b.conv = Conv1dDepthwise::init(inner, cfg.conv1d_kernel, rng);
    b.ssm = ssm::SsmParams::init(inner, cfg.state_size, cfg.ssm_skip, rng);
    return b;
}

Tensor MambaBranch::operator()(const Tensor& x) const { return ssm::selective_scan(conv(in_proj(x)), ssm); }

void MambaBranch::collect(const std::string& prefix, ParamList& out) const {
    in_proj.collect(prefix + "in_proj.", out);
    conv.collect(prefix + "conv1d.", out);
    ssm.collect(prefix + "ssm.", out);
}

ConvMamba ConvMamba::init(const BlockConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.d_model, inner = cfg.inner();
    ConvMamba m;
    m.cfg = cfg;
    m.gate_proj = Linear::init(c / 2, inner, rng);
    m.global = MambaBranch::init(c / 2, inner, cfg, rng);
    m.global_norm = LayerNorm::init(inner);
    m.local_in = SpatialConv::init(c, inner, cfg.conv2d_kernel, cfg.separable_conv, rng);
    m.local_out = SpatialConv::init(inner, inner, cfg.conv2d_kernel, cfg.separable_conv, rng);
    m.out_proj = Linear::init(inner, c, rng);
    return m;
}

Tensor ConvMamba::operator()(const Tensor& x, TokenGrid grid) const {
    check_tokens("conv_mamba", x, cfg.d_model, grid);
    const std::size_t half = cfg.d_model / 2;
    auto halves = ops::split(x, 1, {half, half});
    Tensor gated = ops::silu(gate_proj(halves[0]));
    Tensor global_feat = global_norm(global(halves[1]));
    Tensor local_feat = local_path(local_in, local_out, x, grid);
    return out_proj(ops::add(ops::mul(gated, global_feat), local_feat));
}

void ConvMamba::collect(const std::string& prefix, ParamList& out) const {
    gate_proj.collect(prefix + "gate_proj.", out);
    global.collect(prefix + "global.", out);
    global_norm.collect(prefix + "global_norm.", out);
    local_in.collect(prefix + "local_in.", out);
    local_out.collect(prefix + "local_out.", out);
    out_proj.collect(prefix + "out_proj.", out);
}

Srcm Srcm::init(const BlockConfig& cfg, Rng& rng) {
    Srcm s;
    s.pre_norm = LayerNorm::init(cfg.d_model);
    s.core = ConvMamba::init(cfg, rng);
    s.alpha = Tensor::scalar(1.0, true);
    s.post_norm = LayerNorm::init(cfg.d_model);
    s.out_proj = Linear::init(cfg.d_model, cfg.d_model, rng);
    return s;
}

Tensor Srcm::residual(const Tensor& x, TokenGrid grid) const {
    return ops::add(core(pre_norm(x), grid), ops::mul_scalar(x, alpha));
}

Tensor Srcm::operator()(const Tensor& x, TokenGrid grid) const { return out_proj(post_norm(residual(x, grid))); }

void Srcm::collect(const std::string& prefix, ParamList& out) const {
    pre_norm.collect(prefix + "pre_norm.", out);
    core.collect(prefix + "conv_mamba.", out);
    out.push_back({prefix + "alpha", alpha});
    post_norm.collect(prefix + "post_norm.", out);
    out_proj.collect(prefix + "out_proj.", out);
}

Ggf Ggf::init(const BlockConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.d_model, inner = cfg.inner();
    Ggf g;
    g.cfg = cfg;
    g.gate_proj = Linear::init(c, inner, rng);
    g.target_path = MambaBranch::init(c, inner, cfg, rng);
    g.target_norm = LayerNorm::init(inner);
    g.guide_path = MambaBranch::init(c, inner, cfg, rng);
    g.out_proj = Linear::init(inner, c, rng);
    return g;
}

Tensor Ggf::operator()(const Tensor& target, const Tensor& guide, TokenGrid grid) const {
    check_tokens("ggf", target, cfg.d_model, grid);
    check_tokens("ggf", guide, cfg.d_model, grid);
    Tensor fused = ops::mul(ops::silu(gate_proj(target)), target_norm(target_path(target)));
    Tensor gate = apply_gate(guide_path(guide), cfg.gate);
    return out_proj(ops::mul(fused, gate));
}

void Ggf::collect(const std::string& prefix, ParamList& out) const {
    gate_proj.collect(prefix + "gate_proj.", out);
    target_path.collect(prefix + "target.", out);
    target_norm.collect(prefix + "target_norm.", out);
    guide_path.collect(prefix + "guide.", out);
    out_proj.collect(prefix + "out_proj.", out);
}

Lgf Lgf::init(const BlockConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.d_model, inner = lgf_channels(cfg.lgf_width, c);
    Lgf l;
    l.cfg = cfg;
    l.gate_proj = Linear::init(c, inner, rng);
    l.target_path = MambaBranch::init(c, inner, cfg, rng);
    l.target_norm = LayerNorm::init(inner);
    l.guide_in = SpatialConv::init(c, inner, cfg.conv2d_kernel, false, rng);
    l.guide_out = SpatialConv::init(inner, inner, cfg.conv2d_kernel, false, rng);
    l.out_proj = Linear::init(inner, c, rng);
    return l;
}

Tensor Lgf::operator()(const Tensor& target, const Tensor& guide, TokenGrid grid) const {
    check_tokens("lgf", target, cfg.d_model, grid);
    check_tokens("lgf", guide, cfg.d_model, grid);
    Tensor fused = ops::mul(ops::silu(gate_proj(target)), target_norm(target_path(target)));
    Tensor gate = apply_gate(local_path(guide_in, guide_out, guide, grid), cfg.gate);
    return out_proj(ops::mul(fused, gate));
}

void Lgf::collect(const std::string& prefix, ParamList& out) const {
    gate_proj.collect(prefix + "gate_proj.", out);
    target_path.collect(prefix + "target.", out);
    target_norm.collect(prefix + "target_norm.", out);
    guide_in.collect(prefix + "guide_in.", out);
    guide_out.collect(prefix + "guide_out.", out);
    out_proj.collect(prefix + "out_proj.", out);
}

AglgfGate AglgfGate::init(std::size_t d_model, Rng& rng) {
    AglgfGate g;
    g.score = Linear::init(2 * d_model, 2, rng);
    return g;
}

Tensor AglgfGate::scores(const Tensor& global, const Tensor& local) const {
    if (global.shape() != local.shape() || global.rank() != 2) {
        throw InputError("aglgf_gate: shape mismatch " + to_string(global.shape()) + " vs " + to_string(local.shape()));
    }
    const std::size_t c = global.dim(1);
    Tensor pooled = ops::concat({ops::mean(global, 0), ops::mean(local, 0)}, 0);
    Tensor logits = score(ops::reshape(pooled, {1, 2 * c}));
    return ops::reshape(ops::softmax(logits), {2});
}

Tensor AglgfGate::operator()(const Tensor& global, const Tensor& local) const {
    auto w = ops::split(scores(global, local), 0, {1, 1});
    return ops::add(ops::mul_scalar(global, w[0]), ops::mul_scalar(local, w[1]));
}

void AglgfGate::collect(const std::string& prefix, ParamList& out) const { score.collect(prefix + "score.", out); }

Aglgf Aglgf::init(const BlockConfig& cfg, Rng& rng) {
    Aglgf a;
    a.ggf = Ggf::init(cfg, rng);
    a.lgf = Lgf::init(cfg, rng);
    a.gate = AglgfGate::init(cfg.d_model, rng);
    return a;
}

Tensor Aglgf::fuse(const Tensor& target, const Tensor& guide, TokenGrid grid) const {
    return gate(ggf(target, guide, grid), lgf(target, guide, grid));
}

std::pair<Tensor, Tensor> Aglgf::operator()(const Tensor& f1, const Tensor& f2, TokenGrid grid) const {
    if (f1.shape() != f2.shape()) {
        throw InputError("aglgf: bi-temporal features differ in shape: " + to_string(f1.shape()) + " vs " + to_string(f2.shape()));
    }
    return {fuse(f1, f2, grid), fuse(f2, f1, grid)};
}

void Aglgf::collect(const std::string& prefix, ParamList& out) const {
    ggf.collect(prefix + "ggf.", out);
    lgf.collect(prefix + "lgf.", out);
    gate.collect(prefix + "gate.", out);
}

}  // namespace cdmamba
