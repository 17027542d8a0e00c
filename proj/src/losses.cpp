#include "cdmamba/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba {

namespace {

// [.., 2, H, W] -> (batch, pixels per sample)
std::pair<std::size_t, std::size_t> class_layout(const Tensor& logits) {
    const auto& s = logits.shape();
    if ((s.size() != 3 && s.size() != 4) || s[s.size() - 3] != 2) {
        throw InputError("expected logits [2,H,W] or [B,2,H,W], got " + to_string(s));
    }
    const std::size_t batch = s.size() == 4 ? s[0] : 1;
    return {batch, s[s.size() - 2] * s[s.size() - 1]};
}

void check_labels(std::span<const std::uint8_t> labels, std::size_t expected) {
    if (labels.size() != expected) {
        throw InputError("label count " + std::to_string(labels.size()) + " does not match " + std::to_string(expected) + " pixels");
    }
    for (auto v : labels) {
        if (v > 1) throw InputError("mask values must be 0 or 1, found " + std::to_string(v));
    }
}

constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)

}  // namespace

void LossConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw ConfigError("loss weights must be non-negative");
    if (!(lambda1 + lambda2 > 0)) throw ConfigError("lambda1 + lambda2 must be positive");
    if (dice_smoothing < 0) throw ConfigError("dice_smoothing must be non-negative");
}

Tensor ce_loss(const Tensor& logits, std::span<const std::uint8_t> labels) {
    const auto [batch, pixels] = class_layout(logits);
    check_labels(labels, batch * pixels);
    auto z = logits.data();
    const double n = static_cast<double>(batch * pixels);
    // Per pixel: softmax probabilities and whether the floor was active.
    std::vector<double> p1(batch * pixels);
    std::vector<std::uint8_t> floored(batch * pixels, 0);
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* z0 = z.data() + b * 2 * pixels;
        const double* z1 = z0 + pixels;
        for (std::size_t i = 0; i < pixels; ++i) {
            const std::size_t k = b * pixels + i;
            const double m = std::max(z0[i], z1[i]);
            const double lse = m + std::log(std::exp(z0[i] - m) + std::exp(z1[i] - m));
            const double logp = (labels[k] ? z1[i] : z0[i]) - lse;
            p1[k] = std::exp(z1[i] - lse);
            if (logp < kLogFloor) {
                floored[k] = 1;
                acc -= kLogFloor;
            } else {
                acc -= logp;
            }
        }
    }
    auto out = detail::make_result("ce_loss", {1}, {acc / n});
    if (detail::tracking({&logits})) {
        std::vector<std::uint8_t> y(labels.begin(), labels.end());
        detail::record(out, {logits}, [logits, batch, pixels, n, p1 = std::move(p1), floored = std::move(floored),
                                       y = std::move(y)](std::span<const double> g) {
            auto gz = detail::grad_sink(logits);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t i = 0; i < pixels; ++i) {
                    const std::size_t k = b * pixels + i;
                    if (floored[k]) continue;
                    // d(-log p_y)/dz1 = p1 - y, d/dz0 = -(p1 - y)
                    const double d1 = (p1[k] - y[k]) * g[0] / n;
                    gz[b * 2 * pixels + pixels + i] += d1;
                    gz[b * 2 * pixels + i] -= d1;
                }
            }
        });
    }
    return out;
}

Tensor change_probability(const Tensor& logits) {
    const auto [batch, pixels] = class_layout(logits);
    const auto& s = logits.shape();
    const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
    const std::size_t class_axis = s.size() - 3;
    auto parts = ops::split(logits, class_axis, {1, 1});
    Tensor p = ops::sigmoid(ops::sub(parts[1], parts[0]));
    return s.size() == 4 ? ops::reshape(p, {batch, h, w}) : ops::reshape(p, {h, w});
}

Tensor dice_loss(const Tensor& prob, std::span<const std::uint8_t> labels, double eps) {
    check_labels(labels, prob.numel());
    for (double v : prob.data()) {
        if (v < 0.0 || v > 1.0) throw InputError("dice_loss: probabilities must lie in [0,1], found " + std::to_string(v));
    }
    std::vector<double> y(labels.begin(), labels.end());
    double label_sum = 0.0;
    for (double v : y) label_sum += v;
    Tensor yt = Tensor::from(prob.shape(), std::move(y));
    Tensor numerator = ops::add_scalar(ops::scale(ops::sum_all(ops::mul(prob, yt)), 2.0), eps);
    Tensor denominator = ops::add_scalar(ops::sum_all(prob), label_sum + eps);
    return ops::add_scalar(ops::scale(ops::div(numerator, denominator), -1.0), 1.0);
}

LossTerms total_loss(const Tensor& logits, std::span<const std::uint8_t> labels, const LossConfig& cfg) {
    cfg.validate();
    LossTerms t;
    t.ce = ce_loss(logits, labels);
    t.dice = dice_loss(change_probability(logits), labels, cfg.dice_smoothing);
    t.total = ops::add(ops::scale(t.ce, cfg.lambda1), ops::scale(t.dice, cfg.lambda2));
    return t;
}

}  // namespace cdmamba
