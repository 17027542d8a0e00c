#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba::ops {

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

// For each flat output index, the flat input index it reads under `axes`.
std::vector<std::size_t> permute_gather(const Shape& in_shape, const std::vector<std::size_t>& axes) {
    const std::size_t rank = in_shape.size();
    auto in_strides = strides_of(in_shape);
    Shape out_shape(rank);
    std::vector<std::size_t> step(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[axes[i]];
        step[i] = in_strides[axes[i]];
    }
    const std::size_t n = numel(in_shape);
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        src[flat] = offset;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            offset += step[d];
            if (idx[d] < out_shape[d]) break;
            offset -= step[d] * idx[d];
            idx[d] = 0;
        }
    }
    return src;
}

// outer x axis x inner decomposition used by concat/split/reductions.
struct AxisView {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

void check_axis(const char* op, const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw InputError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + to_string(shape));
    }
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw InputError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    auto out = detail::make_result("reshape", std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const auto& in_shape = x.shape();
    if (axes.size() != in_shape.size()) throw InputError("permute: axis list does not match rank");
    std::vector<std::size_t> sorted = axes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != i) throw InputError("permute: axes are not a permutation");
    }
    Shape out_shape(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = in_shape[axes[i]];
    auto src = permute_gather(in_shape, axes);
    auto xv = x.data();
    std::vector<double> y(src.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[src[i]];
    auto out = detail::make_result("permute", std::move(out_shape), std::move(y));
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x, src = std::move(src)](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw InputError("concat: no inputs");
    const Shape& first = parts.front().shape();
    check_axis("concat", first, axis);
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) throw InputError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
        out_shape[axis] += s[axis];
    }
    auto ov = axis_view(out_shape, axis);
    std::vector<double> y(numel(out_shape));
    std::size_t start = 0;
    for (const auto& p : parts) {
        auto pv = p.data();
        const std::size_t chunk = p.dim(axis) * ov.inner;
        for (std::size_t o = 0; o < ov.outer; ++o) {
            std::copy_n(pv.begin() + o * chunk, chunk, y.begin() + o * ov.extent * ov.inner + start * ov.inner);
        }
        start += p.dim(axis);
    }
    auto out = detail::make_result("concat", std::move(out_shape), std::move(y));
    bool any = false;
    for (const auto& p : parts) any = any || detail::tracking({&p});
    if (any) {
        detail::record(out, parts, [parts, ov](std::span<const double> g) {
            std::size_t start = 0;
            for (const auto& p : parts) {
                const std::size_t chunk = p.numel() / ov.outer;
                auto gp = detail::grad_sink(p);
                if (!gp.empty()) {
                    for (std::size_t o = 0; o < ov.outer; ++o) {
                        const double* src = g.data() + o * ov.extent * ov.inner + start * ov.inner;
                        double* dst = gp.data() + o * chunk;
                        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                    }
                }
                start += chunk / ov.inner;
            }
        });
    }
    return out;
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
    check_axis("split", x.shape(), axis);
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != x.dim(axis)) {
        throw InputError("split: sizes do not add up to extent " + std::to_string(x.dim(axis)) + " of axis " +
                         std::to_string(axis));
    }
    auto v = axis_view(x.shape(), axis);
    auto xv = x.data();
    std::vector<Tensor> outs;
    std::size_t start = 0;
    for (std::size_t size : sizes) {
        Shape s = x.shape();
        s[axis] = size;
        const std::size_t chunk = size * v.inner;
        std::vector<double> y(v.outer * chunk);
        for (std::size_t o = 0; o < v.outer; ++o) {
            std::copy_n(xv.begin() + o * v.extent * v.inner + start * v.inner, chunk, y.begin() + o * chunk);
        }
        auto out = detail::make_result("split", std::move(s), std::move(y));
        if (detail::tracking({&x})) {
            detail::record(out, {x}, [x, v, start, chunk](std::span<const double> g) {
                auto gx = detail::grad_sink(x);
                for (std::size_t o = 0; o < v.outer; ++o) {
                    double* dst = gx.data() + o * v.extent * v.inner + start * v.inner;
                    const double* src = g.data() + o * chunk;
                    for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                }
            });
        }
        outs.push_back(std::move(out));
        start += size;
    }
    return outs;
}

Tensor sum(const Tensor& x, std::size_t axis) {
    check_axis("sum", x.shape(), axis);
    auto v = axis_view(x.shape(), axis);
    Shape s = x.shape();
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
    if (s.empty()) s = {1};
    auto xv = x.data();
    std::vector<double> y(v.outer * v.inner, 0.0);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t e = 0; e < v.extent; ++e)
            for (std::size_t i = 0; i < v.inner; ++i) y[o * v.inner + i] += xv[(o * v.extent + e) * v.inner + i];
    auto out = detail::make_result("sum", std::move(s), std::move(y));
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x, v](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t e = 0; e < v.extent; ++e)
                    for (std::size_t i = 0; i < v.inner; ++i) gx[(o * v.extent + e) * v.inner + i] += g[o * v.inner + i];
        });
    }
    return out;
}

Tensor mean(const Tensor& x, std::size_t axis) {
    check_axis("mean", x.shape(), axis);
    return scale(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto out = detail::make_result("sum_all", {1}, {acc});
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            for (auto& v : gx) v += g[0];
        });
    }
    return out;
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x) {
    if (x.rank() == 0) throw InputError("softmax: rank-0 input");
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.numel() / c;
    auto xv = x.data();
    std::vector<double> y(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * c;
        double* o = y.data() + r * c;
        double m = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - m));
        for (std::size_t j = 0; j < c; ++j) o[j] /= z;
    }
    auto out = detail::make_result("softmax", x.shape(), std::move(y));
    if (detail::tracking({&x})) {
        detail::record(out, {x}, [x, yi = out.impl_ptr().get(), c, rows](std::span<const double> g) {
            auto gx = detail::grad_sink(x);
            const auto& yv = yi->data;
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * yv[r * c + j];
                for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += yv[r * c + j] * (g[r * c + j] - dot);
            }
        });
    }
    return out;
}

Tensor tokens_to_image(const Tensor& tokens, std::size_t height, std::size_t width) {
    if (tokens.rank() != 2 || tokens.dim(0) != height * width) {
        throw InputError("tokens_to_image: " + to_string(tokens.shape()) + " is not " + std::to_string(height) + "x" +
                         std::to_string(width) + " tokens");
    }
    return permute(reshape(tokens, {height, width, tokens.dim(1)}), {2, 0, 1});
}

Tensor image_to_tokens(const Tensor& image) {
    if (image.rank() != 3) throw InputError("image_to_tokens: expected [C,H,W], got " + to_string(image.shape()));
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    return reshape(permute(image, {1, 2, 0}), {h * w, c});
}

}  // namespace cdmamba::ops
