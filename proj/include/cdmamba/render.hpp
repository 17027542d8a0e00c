#pragma once

#include <array>
#include <cstdint>

#include "cdmamba/data.hpp"

namespace cdmamba {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kTruePositive{255, 255, 255};
inline constexpr Rgb kTrueNegative{0, 0, 0};
inline constexpr Rgb kFalsePositive{255, 0, 0};
inline constexpr Rgb kFalseNegative{0, 255, 0};

/// Grayscale 0/255 rendering of a binary mask.
Image8 mask_image(const Mask& mask);
/// Per-pixel confusion colouring: TP white, TN black, FP red, FN green.
Image8 confusion_overlay(const Mask& pred, const Mask& gt);

}  // namespace cdmamba
