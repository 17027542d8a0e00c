#pragma once

#include <cstdint>
#include <span>

#include "cdmamba/tensor.hpp"

namespace cdmamba {

struct LossConfig {
    double lambda1 = 0.5;         // cross-entropy weight
    double lambda2 = 0.5;         // Dice weight
    double dice_smoothing = 1.0;  // added to Dice numerator and denominator

    void validate() const;
};

struct LossTerms {
    Tensor total;
    Tensor ce;
    Tensor dice;
};

/// Two-class cross-entropy averaged over pixels. `logits` is [2,H,W] or
/// [B,2,H,W]; `labels` holds one {0,1} entry per pixel in the same order.
/// log-probabilities are floored at log(1e-12).
Tensor ce_loss(const Tensor& logits, std::span<const std::uint8_t> labels);

/// Softmax probability of class 1 (changed): [H,W] or [B,H,W].
Tensor change_probability(const Tensor& logits);

/// Soft Dice: 1 - (2 sum(y p) + eps) / (sum(y) + sum(p) + eps), a single sum
/// over every pixel given.
Tensor dice_loss(const Tensor& prob, std::span<const std::uint8_t> labels, double eps = 1.0);

/// lambda1 * CE + lambda2 * Dice(change_probability(logits)).
LossTerms total_loss(const Tensor& logits, std::span<const std::uint8_t> labels, const LossConfig& cfg);

}  // namespace cdmamba
