#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "cdmamba/layers.hpp"
#include "cdmamba/ssm.hpp"

namespace cdmamba {

enum class GateActivation { ReLU, SiLU, LeakyReLU, Sigmoid };

const char* to_string(GateActivation g);
GateActivation parse_gate_activation(const std::string& name);
Tensor apply_gate(const Tensor& x, GateActivation g);

/// Width of the local-guidance convolutions as a multiple of d_model.
enum class LgfWidth { One, OneAndHalf, Two };

const char* to_string(LgfWidth w);
LgfWidth parse_lgf_width(const std::string& text);
std::size_t lgf_channels(LgfWidth w, std::size_t d_model);

/// Spatial layout of a token sequence: L = height * width, row-major.
struct TokenGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t tokens() const { return height * width; }
};

struct BlockConfig {
    std::size_t d_model = 16;
    std::size_t expansion = 2;       // lambda
    std::size_t conv1d_kernel = 4;
    std::size_t conv2d_kernel = 3;
    std::size_t state_size = 16;
    bool ssm_skip = true;
    GateActivation gate = GateActivation::ReLU;
    LgfWidth lgf_width = LgfWidth::Two;
    bool separable_conv = false;     // depthwise-separable convs in ConvMamba's local branch

    std::size_t inner() const { return expansion * d_model; }
    void validate() const;
};

/// Linear expansion -> causal depthwise Conv1d -> selective SSM.
struct MambaBranch {
    Linear in_proj;
    Conv1dDepthwise conv;
    ssm::SsmParams ssm;

    static MambaBranch init(std::size_t in, std::size_t inner, const BlockConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Three-branch block: a SiLU-gated SSM path on the two channel halves plus
/// a convolutional path on the full feature map, projected back to C.
struct ConvMamba {
    BlockConfig cfg;
    Linear gate_proj;    // C/2 -> lambda C, SiLU
    MambaBranch global;  // C/2 -> lambda C
    LayerNorm global_norm;
    SpatialConv local_in;   // C -> lambda C
    SpatialConv local_out;  // lambda C -> lambda C
    Linear out_proj;     // lambda C -> C

    static ConvMamba init(const BlockConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& x, TokenGrid grid) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Scaled residual ConvMamba: F~ = ConvMamba(LN(F)) + alpha F, out = Linear(LN(F~)).
struct Srcm {
    LayerNorm pre_norm;
    ConvMamba core;
    Tensor alpha;  // learnable scalar, init 1
    LayerNorm post_norm;
    Linear out_proj;

    static Srcm init(const BlockConfig& cfg, Rng& rng);
    /// F~ before the second norm.
    Tensor residual(const Tensor& x, TokenGrid grid) const;
    Tensor operator()(const Tensor& x, TokenGrid grid) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Global-guided fusion: `guide` gates `target` through an SSM path.
struct Ggf {
    BlockConfig cfg;
    Linear gate_proj;
    MambaBranch target_path;
    LayerNorm target_norm;
    MambaBranch guide_path;
    Linear out_proj;

    static Ggf init(const BlockConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& target, const Tensor& guide, TokenGrid grid) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Local-guided fusion: `guide` gates `target` through a convolutional path.
/// Every internal width is lgf_channels(cfg.lgf_width, C).
struct Lgf {
    BlockConfig cfg;
    Linear gate_proj;
    MambaBranch target_path;
    LayerNorm target_norm;
    SpatialConv guide_in;
    SpatialConv guide_out;
    Linear out_proj;

    static Lgf init(const BlockConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& target, const Tensor& guide, TokenGrid grid) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Softmax-weighted convex combination of the global and local fused maps.
struct AglgfGate {
    Linear score;  // 2C -> 2

    static AglgfGate init(std::size_t d_model, Rng& rng);
    /// The two softmaxed weights, shape [2].
    Tensor scores(const Tensor& global, const Tensor& local) const;
    Tensor operator()(const Tensor& global, const Tensor& local) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Bidirectional guided fusion with weights shared by both directions.
struct Aglgf {
    Ggf ggf;
    Lgf lgf;
    AglgfGate gate;

    static Aglgf init(const BlockConfig& cfg, Rng& rng);
    /// F_1 guided by F_2, for one direction.
    Tensor fuse(const Tensor& target, const Tensor& guide, TokenGrid grid) const;
    /// (F_1 guided by F_2, F_2 guided by F_1).
    std::pair<Tensor, Tensor> operator()(const Tensor& f1, const Tensor& f2, TokenGrid grid) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace cdmamba
