#include <algorithm>
#include <array>
#include <cmath>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba::ops {

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() == 0) throw InputError("layer_norm: rank-0 input");
    const std::size_t c = x.shape().back();
    if (c < 1 || gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != c || beta.dim(0) != c) {
        throw ConfigError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " + to_string(beta.shape()) +
                          " do not match channel axis of " + to_string(x.shape()));
    }
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t rows = x.numel() / c;
    auto xv = x.data(), gv = gamma.data(), bv = beta.data();
    std::vector<double> y(xv.size()), xhat(xv.size()), rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += in[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(c);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[r * c + j] = (in[j] - mu) * rstd[r];
            y[r * c + j] = xhat[r * c + j] * gv[j] + bv[j];
        }
    }
    auto out = detail::make_result("layer_norm", x.shape(), std::move(y));
    if (detail::tracking({&x, &gamma, &beta})) {
        detail::record(out, {x, gamma, beta},
                       [x, gamma, beta, c, rows, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const double> g) {
                           auto gv = gamma.data();
                           auto gx = detail::grad_sink(x);
                           auto gg = detail::grad_sink(gamma);
                           auto gb = detail::grad_sink(beta);
                           std::vector<double> gxhat(c);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* go = g.data() + r * c;
                               const double* xh = xhat.data() + r * c;
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t j = 0; j < c; ++j) {
                                   if (!gg.empty()) gg[j] += go[j] * xh[j];
                                   if (!gb.empty()) gb[j] += go[j];
                                   gxhat[j] = go[j] * gv[j];
                                   m1 += gxhat[j];
                                   m2 += gxhat[j] * xh[j];
                               }
                               if (gx.empty()) continue;
                               m1 /= static_cast<double>(c);
                               m2 /= static_cast<double>(c);
                               for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += rstd[r] * (gxhat[j] - m1 - xh[j] * m2);
                           }
                       });
    }
    return out;
}

namespace {

// Two-tap interpolation table for one axis under the half-pixel convention.
struct Taps {
    std::vector<std::array<std::size_t, 2>> index;
    std::vector<std::array<double, 2>> weight;
};

Taps make_taps(std::size_t in, std::size_t out) {
    Taps t;
    t.index.resize(out);
    t.weight.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        const double frac = src - static_cast<double>(i0);
        t.index[o] = {i0, i1};
        t.weight[o] = {1.0 - frac, frac};
    }
    return t;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t num, std::size_t den) {
    if (x.rank() != 3) throw InputError("bilinear_resize: expected [C,H,W], got " + to_string(x.shape()));
    if (num == 0 || den == 0) throw ConfigError("bilinear_resize: scale must be a positive rational");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    // round(n * num / den), halves rounded up
    const std::size_t ho = (2 * h * num + den) / (2 * den);
    const std::size_t wo = (2 * w * num + den) / (2 * den);
    if (ho < 1 || wo < 1) {
        throw ConfigError("bilinear_resize: output size below 1 for input " + to_string(x.shape()) + " at scale " +
                          std::to_string(num) + "/" + std::to_string(den));
    }
    auto rows = make_taps(h, ho);
    auto cols = make_taps(w, wo);
    auto xv = x.data();
    std::vector<double> y(c * ho * wo);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = xv.data() + ch * h * w;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                double acc = 0.0;
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        acc += rows.weight[i][a] * cols.weight[j][b] * plane[rows.index[i][a] * w + cols.index[j][b]];
                y[(ch * ho + i) * wo + j] = acc;
            }
        }
    }
    auto out = detail::make_result("bilinear_resize", {c, ho, wo}, std::move(y));
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x, rows, cols, c, h, w, ho, wo](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* plane = gx.data() + ch * h * w;
                for (std::size_t i = 0; i < ho; ++i) {
                    for (std::size_t j = 0; j < wo; ++j) {
                        const double gv = g[(ch * ho + i) * wo + j];
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 2; ++b)
                                plane[rows.index[i][a] * w + cols.index[j][b]] += rows.weight[i][a] * cols.weight[j][b] * gv;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace cdmamba::ops
