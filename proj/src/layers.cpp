#include "cdmamba/layers.hpp"

#include <cmath>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = uniform(rng, -bound, bound);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::size_t count_parameters(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

namespace {
double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
    if (in == 0 || out == 0) throw ConfigError("Linear: zero width");
    Linear l;
    l.weight = uniform_tensor({in, out}, fan_in_bound(in), rng);
    if (with_bias) l.bias = Tensor::zeros({out}, true);
    return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "weight", weight});
    if (bias.defined()) out.push_back({prefix + "bias", bias});
}

LayerNorm LayerNorm::init(std::size_t channels) {
    LayerNorm n;
    n.gamma = Tensor::full({channels}, 1.0, true);
    n.beta = Tensor::zeros({channels}, true);
    return n;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "gamma", gamma});
    out.push_back({prefix + "beta", beta});
}

Conv2d Conv2d::init(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng, std::size_t groups, bool with_bias) {
    if (kernel % 2 == 0) throw ConfigError("Conv2d: kernel size must be odd, got " + std::to_string(kernel));
    if (groups == 0 || in % groups != 0 || out % groups != 0) throw ConfigError("Conv2d: groups must divide channels");
    Conv2d c;
    const std::size_t per_group = in / groups;
    c.weight = uniform_tensor({out, per_group, kernel, kernel}, fan_in_bound(per_group * kernel * kernel), rng);
    if (with_bias) c.bias = Tensor::zeros({out}, true);
    c.padding = kernel / 2;
    c.groups = groups;
    return c;
}

Tensor Conv2d::operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride, padding, groups); }

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "weight", weight});
    if (bias.defined()) out.push_back({prefix + "bias", bias});
}

SpatialConv SpatialConv::init(std::size_t in, std::size_t out, std::size_t kernel, bool separable, Rng& rng) {
    SpatialConv s;
    s.separable = separable;
    if (separable) {
        s.depthwise = Conv2d::init(in, in, kernel, rng, in, false);
        s.pointwise = Conv2d::init(in, out, 1, rng);
    } else {
        s.dense = Conv2d::init(in, out, kernel, rng);
    }
    return s;
}

Tensor SpatialConv::operator()(const Tensor& x) const { return separable ? pointwise(depthwise(x)) : dense(x); }

void SpatialConv::collect(const std::string& prefix, ParamList& out) const {
    if (separable) {
        depthwise.collect(prefix + "dw.", out);
        pointwise.collect(prefix + "pw.", out);
    } else {
        dense.collect(prefix, out);
    }
}

Conv1dDepthwise Conv1dDepthwise::init(std::size_t channels, std::size_t kernel, Rng& rng) {
    if (kernel == 0) throw ConfigError("Conv1dDepthwise: kernel must be >= 1");
    Conv1dDepthwise c;
    c.weight = uniform_tensor({channels, kernel}, fan_in_bound(kernel), rng);
    return c;
}

Tensor Conv1dDepthwise::operator()(const Tensor& x) const { return ops::conv1d_depthwise(x, weight, true); }

void Conv1dDepthwise::collect(const std::string& prefix, ParamList& out) const { out.push_back({prefix + "weight", weight}); }

}  // namespace cdmamba
