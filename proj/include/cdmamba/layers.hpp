#pragma once

#include <cstddef>
#include <string>

#include "cdmamba/module.hpp"
#include "cdmamba/tensor.hpp"

namespace cdmamba {

/// y = x W + b over the last axis of x[L,in]. Weight stored [in,out].
struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when built without bias

    static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;

    static LayerNorm init(std::size_t channels);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2d {
    Tensor weight;  // [C_out, C_in/groups, k, k]
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;

    /// "Same" padding (k/2) at stride 1.
    static Conv2d init(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng, std::size_t groups = 1,
                       bool with_bias = true);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Spatial k x k convolution, either dense or depthwise-separable
/// (per-channel k x k followed by a 1x1 pointwise mix).
struct SpatialConv {
    bool separable = false;
    Conv2d dense;
    Conv2d depthwise;
    Conv2d pointwise;

    static SpatialConv init(std::size_t in, std::size_t out, std::size_t kernel, bool separable, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Causal per-channel convolution along the token axis, weight [C,k].
struct Conv1dDepthwise {
    Tensor weight;

    static Conv1dDepthwise init(std::size_t channels, std::size_t kernel, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace cdmamba
