#include "cdmamba/metrics.hpp"

#include "cdmamba/error.hpp"

namespace cdmamba {

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
    if (pred.height != gt.height || pred.width != gt.width || pred.data.size() != gt.data.size()) {
        throw InputError("confusion: prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " but ground truth is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
    // index = 2*pred + gt: 0 TN, 1 FN, 2 FP, 3 TP
    std::uint64_t bins[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (pred.data[i] > 1 || gt.data[i] > 1) throw InputError("confusion: mask values must be 0 or 1");
        ++bins[2 * pred.data[i] + gt.data[i]];
    }
    return {bins[3], bins[0], bins[2], bins[1]};
}

Metrics metrics(const ConfusionCounts& c) {
    Metrics m;
    auto ratio = [&m](double num, double den) {
        if (den == 0) {
            m.degenerate = true;
            return 0.0;
        }
        return num / den;
    };
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    m.iou = ratio(tp, tp + fp + fn);
    m.oa = ratio(tp + tn, tp + tn + fp + fn);
    return m;
}

Mask argmax_mask(const Tensor& logits) {
    if (logits.rank() != 3 || logits.dim(0) != 2) {
        throw InputError("argmax_mask: expected logits [2,H,W], got " + to_string(logits.shape()));
    }
    const std::size_t h = logits.dim(1), w = logits.dim(2), hw = h * w;
    Mask m = Mask::zeros(h, w);
    auto z = logits.data();
    for (std::size_t i = 0; i < hw; ++i) m.data[i] = z[hw + i] > z[i] ? 1 : 0;
    return m;
}

}  // namespace cdmamba
