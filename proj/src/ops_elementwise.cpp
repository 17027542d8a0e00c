#include <cmath>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw InputError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

// y = f(x) elementwise; dfdx(x, y) is the local derivative.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF dfdx) {
    auto xs = x.data();
    std::vector<double> y(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) y[i] = f(xs[i]);
    auto out = detail::make_result(op, x.shape(), std::move(y));
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x, out_impl = out.impl_ptr().get(), dfdx](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            auto xv = x.data();
            const auto& yv = out_impl->data;
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
        });
    }
    return out;
}

double sigmoid_scalar(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    auto av = a.data(), bv = b.data();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    auto out = detail::make_result("add", a.shape(), std::move(y));
    if (detail::tracking({&a, &b})) {
        detail::record(out, {a, b}, [a, b](std::span<const double> g) {
            for (auto& t : {a, b}) {
                auto gt = detail::grad_sink(t);
                for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    auto av = a.data(), bv = b.data();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    auto out = detail::make_result("sub", a.shape(), std::move(y));
    if (detail::tracking({&a, &b})) {
        detail::record(out, {a, b}, [a, b](std::span<const double> g) {
            auto ga = detail::grad_sink(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
            auto gb = detail::grad_sink(b);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    auto av = a.data(), bv = b.data();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    auto out = detail::make_result("mul", a.shape(), std::move(y));
    if (detail::tracking({&a, &b})) {
        detail::record(out, {a, b}, [a, b](std::span<const double> g) {
            auto av = a.data(), bv = b.data();
            auto ga = detail::grad_sink(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
            auto gb = detail::grad_sink(b);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
        });
    }
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    auto av = a.data(), bv = b.data();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
    auto out = detail::make_result("div", a.shape(), std::move(y));
    if (detail::tracking({&a, &b})) {
        detail::record(out, {a, b}, [a, b](std::span<const double> g) {
            auto av = a.data(), bv = b.data();
            auto ga = detail::grad_sink(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bv[i];
            auto gb = detail::grad_sink(b);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    return unary("scale", x, [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary("add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw InputError("mul_scalar: scale must have one element, got " + to_string(s.shape()));
    const double k = s.item();
    auto xv = x.data();
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * k;
    auto out = detail::make_result("mul_scalar", x.shape(), std::move(y));
    if (detail::tracking({&x, &s})) {
        detail::record(out, {x, s}, [x, s](std::span<const double> g) {
            const double k = s.item();
            auto xv = x.data();
            auto gx = detail::grad_sink(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * k;
            auto gs = detail::grad_sink(s);
            if (!gs.empty()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < xv.size(); ++i) acc += g[i] * xv[i];
                gs[0] += acc;
            }
        });
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
        throw InputError("add_bias: bias " + to_string(bias.shape()) + " does not match last axis of " +
                         to_string(x.shape()));
    }
    const std::size_t c = bias.dim(0);
    auto xv = x.data(), bv = bias.data();
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + bv[i % c];
    auto out = detail::make_result("add_bias", x.shape(), std::move(y));
    if (detail::tracking({&x, &bias})) {
        detail::record(out, {x, bias}, [x, bias, c](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
            auto gb = detail::grad_sink(bias);
            if (!gb.empty()) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
            }
        });
    }
    return out;
}

Tensor silu(const Tensor& x) {
    return unary(
        "silu", x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v, double) {
            double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor relu(const Tensor& x) {
    return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
    return unary("leaky_relu", x, [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; },
                 [negative_slope](double v, double) { return v > 0.0 ? 1.0 : negative_slope; });
}

Tensor sigmoid(const Tensor& x) {
    return unary("sigmoid", x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
    // log(1 + e^v) = max(v, 0) + log1p(e^{-|v|})
    return unary(
        "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return sigmoid_scalar(v); });
}

Tensor exp(const Tensor& x) {
    return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor abs(const Tensor& x) {
    return unary("abs", x, [](double v) { return std::abs(v); },
                 [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x, double floor) {
    return unary("log", x, [floor](double v) { return std::log(std::max(v, floor)); },
                 [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

}  // namespace cdmamba::ops
