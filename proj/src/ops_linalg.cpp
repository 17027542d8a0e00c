#include <algorithm>
#include <Eigen/Core>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
    return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> v, std::size_t rows, std::size_t cols) {
    return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

struct ConvGeometry {
    std::size_t c_in, h, w, c_out, k, stride, pad, groups, h_out, w_out;
    std::size_t cin_g() const { return c_in / groups; }
    std::size_t cout_g() const { return c_out / groups; }
    std::size_t positions() const { return h_out * w_out; }
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// cols[(ci*k + ky)*k + kx, oy*w_out + ox] for the channels of one group.
void im2col(const double* x, const ConvGeometry& g, std::size_t group, double* cols) {
    const std::size_t n = g.positions();
    for (std::size_t ci = 0; ci < g.cin_g(); ++ci) {
        const double* plane = x + (group * g.cin_g() + ci) * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = cols + ((ci * g.k + ky) * g.k + kx) * n;
                for (std::size_t oy = 0; oy < g.h_out; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    for (std::size_t ox = 0; ox < g.w_out; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        const bool inside = iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 &&
                                            ix < static_cast<long>(g.w);
                        row[oy * g.w_out + ox] = inside ? plane[iy * static_cast<long>(g.w) + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, const ConvGeometry& g, std::size_t group, double* gx) {
    const std::size_t n = g.positions();
    for (std::size_t ci = 0; ci < g.cin_g(); ++ci) {
        double* plane = gx + (group * g.cin_g() + ci) * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = cols + ((ci * g.k + ky) * g.k + kx) * n;
                for (std::size_t oy = 0; oy < g.h_out; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    for (std::size_t ox = 0; ox < g.w_out; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                        plane[iy * static_cast<long>(g.w) + ix] += row[oy * g.w_out + ox];
                    }
                }
            }
        }
    }
}

// Output columns [lo, hi) whose tap kx lands inside the input row.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
    const long s = static_cast<long>(g.stride), off = static_cast<long>(kx) - static_cast<long>(g.pad);
    long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    long hi = (static_cast<long>(g.w) - off + s - 1) / s;
    hi = std::clamp(hi, 0L, static_cast<long>(g.w_out));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Calls fn(oy, iy, ox_lo, ox_hi, ix_lo) for every output row that tap (ky, kx) reaches.
template <typename Fn>
void for_each_tap_row(const ConvGeometry& g, std::size_t ky, std::size_t kx, Fn&& fn) {
    const auto [lo, hi] = valid_columns(g, kx);
    if (lo == hi) return;
    const std::size_t ix_lo = lo * g.stride + kx - g.pad;
    for (std::size_t oy = 0; oy < g.h_out; ++oy) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
        if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
        fn(oy, static_cast<std::size_t>(iy), lo, hi, ix_lo);
    }
}

Tensor conv2d_depthwise(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
    auto xv = x.data(), wv = weight.data();
    std::vector<double> y(g.c_out * g.positions(), 0.0);
    for (std::size_t c = 0; c < g.c_out; ++c) {
        const double* plane = xv.data() + c * g.h * g.w;
        const double* ker = wv.data() + c * g.k * g.k;
        double* out = y.data() + c * g.positions();
        if (bias.defined()) std::fill(out, out + g.positions(), bias.data()[c]);
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double wk = ker[ky * g.k + kx];
                for_each_tap_row(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t lo, std::size_t hi, std::size_t ix) {
                    double* orow = out + oy * g.w_out;
                    const double* irow = plane + iy * g.w + ix;
                    for (std::size_t ox = lo; ox < hi; ++ox, irow += g.stride) orow[ox] += wk * *irow;
                });
            }
        }
    }
    auto out = detail::make_result("conv2d_depthwise", {g.c_out, g.h_out, g.w_out}, std::move(y));
    if (detail::tracking({&x, &weight, &bias})) {
        detail::record(out, {x, weight, bias}, [x, weight, bias, g](std::span<const double> gy) {
            auto xv = x.data(), wv = weight.data();
            auto gx = detail::grad_sink(x);
            auto gw = detail::grad_sink(weight);
            auto gb = detail::grad_sink(bias);
            for (std::size_t c = 0; c < g.c_out; ++c) {
                const double* plane = xv.data() + c * g.h * g.w;
                const double* ker = wv.data() + c * g.k * g.k;
                const double* go = gy.data() + c * g.positions();
                if (!gb.empty()) {
                    for (std::size_t i = 0; i < g.positions(); ++i) gb[c] += go[i];
                }
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const double wk = ker[ky * g.k + kx];
                        double acc = 0.0;
                        for_each_tap_row(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t lo, std::size_t hi,
                                                        std::size_t ix) {
                            const double* grow = go + oy * g.w_out;
                            const std::size_t base = c * g.h * g.w + iy * g.w + ix;
                            if (!gw.empty()) {
                                const double* irow = plane + iy * g.w + ix;
                                for (std::size_t ox = lo; ox < hi; ++ox, irow += g.stride) acc += grow[ox] * *irow;
                            }
                            if (!gx.empty()) {
                                double* xrow = gx.data() + base;
                                for (std::size_t ox = lo; ox < hi; ++ox, xrow += g.stride) *xrow += grow[ox] * wk;
                            }
                        });
                        if (!gw.empty()) gw[(c * g.k + ky) * g.k + kx] += acc;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw InputError("matmul: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> y(m * n);
    as_matrix(y, m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
    auto out = detail::make_result("matmul", {m, n}, std::move(y));
    if (detail::tracking({&a, &b})) {
        detail::record(out, {a, b}, [a, b, m, k, n](std::span<const double> g) {
            auto gm = as_matrix(g, m, n);
            auto ga = detail::grad_sink(a);
            if (!ga.empty()) as_matrix(ga, m, k).noalias() += gm * as_matrix(b.data(), k, n).transpose();
            auto gb = detail::grad_sink(b);
            if (!gb.empty()) as_matrix(gb, k, n).noalias() += as_matrix(a.data(), m, k).transpose() * gm;
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    auto y = matmul(x, weight);
    return bias.defined() ? add_bias(y, bias) : y;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding,
              std::size_t groups) {
    if (x.rank() != 3) throw InputError("conv2d: expected input [C,H,W], got " + to_string(x.shape()));
    if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
        throw ConfigError("conv2d: expected square kernel [C_out,C_in/groups,k,k], got " + to_string(weight.shape()));
    }
    if (groups == 0 || stride == 0) throw ConfigError("conv2d: stride and groups must be positive");
    ConvGeometry g{};
    g.c_in = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.c_out = weight.dim(0);
    g.k = weight.dim(2);
    g.stride = stride;
    g.pad = padding;
    g.groups = groups;
    if (g.c_in % groups != 0 || g.c_out % groups != 0 || weight.dim(1) != g.c_in / groups) {
        throw ConfigError("conv2d: weight " + to_string(weight.shape()) + " incompatible with input " +
                          to_string(x.shape()) + " and groups=" + std::to_string(groups));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.c_out)) {
        throw ConfigError("conv2d: bias " + to_string(bias.shape()) + " does not match C_out=" + std::to_string(g.c_out));
    }
    if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) {
        throw ConfigError("conv2d: non-positive output size for input " + to_string(x.shape()) + ", kernel " +
                          std::to_string(g.k) + ", padding " + std::to_string(padding));
    }
    g.h_out = (g.h + 2 * padding - g.k) / stride + 1;
    g.w_out = (g.w + 2 * padding - g.k) / stride + 1;

    if (groups == g.c_in && groups == g.c_out) return conv2d_depthwise(x, weight, bias, g);

    const std::size_t n = g.positions();
    const std::size_t kdim = g.cin_g() * g.k * g.k;
    // Pointwise convs read the input directly; everything else goes through im2col.
    std::vector<double> cols;
    if (!g.pointwise()) {
        cols.resize(groups * kdim * n);
        for (std::size_t gi = 0; gi < groups; ++gi) im2col(x.data().data(), g, gi, cols.data() + gi * kdim * n);
    }
    auto cols_of = [&cols, &x, kdim, n, &g](std::size_t gi) -> const double* {
        return g.pointwise() ? x.data().data() + gi * kdim * n : cols.data() + gi * kdim * n;
    };

    std::vector<double> y(g.c_out * n);
    auto wv = weight.data();
    for (std::size_t gi = 0; gi < groups; ++gi) {
        as_matrix(std::span<double>(y.data() + gi * g.cout_g() * n, g.cout_g() * n), g.cout_g(), n).noalias() =
            as_matrix(wv.subspan(gi * g.cout_g() * kdim, g.cout_g() * kdim), g.cout_g(), kdim) *
            as_matrix(std::span<const double>(cols_of(gi), kdim * n), kdim, n);
    }
    if (bias.defined()) {
        auto bv = bias.data();
        for (std::size_t co = 0; co < g.c_out; ++co)
            for (std::size_t p = 0; p < n; ++p) y[co * n + p] += bv[co];
    }
    auto out = detail::make_result("conv2d", {g.c_out, g.h_out, g.w_out}, std::move(y));
    if (detail::tracking({&x, &weight, &bias})) {
        detail::record(out, {x, weight, bias}, [x, weight, bias, g, kdim, n, cols = std::move(cols)](std::span<const double> gy) {
            auto wv = weight.data();
            auto gx = detail::grad_sink(x);
            auto gw = detail::grad_sink(weight);
            auto gb = detail::grad_sink(bias);
            std::vector<double> gcols;
            for (std::size_t gi = 0; gi < g.groups; ++gi) {
                auto go = as_matrix(gy.subspan(gi * g.cout_g() * n, g.cout_g() * n), g.cout_g(), n);
                const double* cp = g.pointwise() ? x.data().data() + gi * kdim * n : cols.data() + gi * kdim * n;
                if (!gw.empty()) {
                    as_matrix(gw.subspan(gi * g.cout_g() * kdim, g.cout_g() * kdim), g.cout_g(), kdim).noalias() +=
                        go * as_matrix(std::span<const double>(cp, kdim * n), kdim, n).transpose();
                }
                if (!gx.empty()) {
                    auto wg = as_matrix(wv.subspan(gi * g.cout_g() * kdim, g.cout_g() * kdim), g.cout_g(), kdim);
                    if (g.pointwise()) {
                        as_matrix(gx.subspan(gi * kdim * n, kdim * n), kdim, n).noalias() += wg.transpose() * go;
                    } else {
                        gcols.resize(kdim * n);
                        as_matrix(gcols, kdim, n).noalias() = wg.transpose() * go;
                        col2im_add(gcols.data(), g, gi, gx.data());
                    }
                }
            }
            if (!gb.empty()) {
                for (std::size_t co = 0; co < g.c_out; ++co)
                    for (std::size_t p = 0; p < n; ++p) gb[co] += gy[co * n + p];
            }
        });
    }
    return out;
}

Tensor conv1d_depthwise(const Tensor& x, const Tensor& weight, bool causal_left_pad) {
    if (x.rank() != 2 || x.dim(0) < 1) throw InputError("conv1d_depthwise: expected [L,C] with L >= 1, got " + to_string(x.shape()));
    if (weight.rank() != 2 || weight.dim(0) != x.dim(1) || weight.dim(1) < 1) {
        throw ConfigError("conv1d_depthwise: weight " + to_string(weight.shape()) + " does not match input " +
                          to_string(x.shape()));
    }
    const std::size_t len = x.dim(0), c = x.dim(1), k = weight.dim(1);
    const long left = causal_left_pad ? static_cast<long>(k - 1) : static_cast<long>((k - 1) / 2);
    auto xv = x.data(), wv = weight.data();
    std::vector<double> y(len * c, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < k; ++j) {
            const long src = static_cast<long>(t + j) - left;
            if (src < 0 || src >= static_cast<long>(len)) continue;
            const double* xr = xv.data() + static_cast<std::size_t>(src) * c;
            double* yr = y.data() + t * c;
            for (std::size_t ch = 0; ch < c; ++ch) yr[ch] += wv[ch * k + j] * xr[ch];
        }
    }
    auto out = detail::make_result("conv1d_depthwise", x.shape(), std::move(y));
    if (detail::tracking({&x, &weight})) {
        detail::record(out, {x, weight}, [x, weight, len, c, k, left](std::span<const double> g) {
            auto xv = x.data(), wv = weight.data();
            auto gx = detail::grad_sink(x);
            auto gw = detail::grad_sink(weight);
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t j = 0; j < k; ++j) {
                    const long src = static_cast<long>(t + j) - left;
                    if (src < 0 || src >= static_cast<long>(len)) continue;
                    const std::size_t s = static_cast<std::size_t>(src);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double gv = g[t * c + ch];
                        if (!gx.empty()) gx[s * c + ch] += gv * wv[ch * k + j];
                        if (!gw.empty()) gw[ch * k + j] += gv * xv[s * c + ch];
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace cdmamba::ops
