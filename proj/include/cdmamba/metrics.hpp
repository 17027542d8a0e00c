#pragma once

#include <cstdint>

#include "cdmamba/data.hpp"
#include "cdmamba/tensor.hpp"

namespace cdmamba {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const ConfusionCounts&) const = default;
};

struct Metrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double iou = 0;
    double oa = 0;
    /// Set when any denominator was zero; the affected metric is reported as 0.
    bool degenerate = false;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);
Metrics metrics(const ConfusionCounts& c);

/// Per-pixel argmax over the class axis of [2,H,W] logits; ties go to class 0.
Mask argmax_mask(const Tensor& logits);

}  // namespace cdmamba
