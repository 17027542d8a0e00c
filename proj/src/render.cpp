#include "cdmamba/render.hpp"

#include "cdmamba/error.hpp"

namespace cdmamba {

Image8 mask_image(const Mask& mask) {
    Image8 img{mask.height, mask.width, 1, std::vector<std::uint8_t>(mask.data.size())};
    for (std::size_t i = 0; i < mask.data.size(); ++i) img.pixels[i] = mask.data[i] ? 255 : 0;
    return img;
}

Image8 confusion_overlay(const Mask& pred, const Mask& gt) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw InputError("overlay: prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                         ", ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
    }
    // indexed by 2*pred + gt
    static constexpr Rgb colours[4] = {kTrueNegative, kFalseNegative, kFalsePositive, kTruePositive};
    Image8 img{pred.height, pred.width, 3, std::vector<std::uint8_t>(3 * pred.data.size())};
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const Rgb& c = colours[2 * (pred.data[i] ? 1 : 0) + (gt.data[i] ? 1 : 0)];
        for (std::size_t k = 0; k < 3; ++k) img.pixels[3 * i + k] = c[k];
    }
    return img;
}

}  // namespace cdmamba
