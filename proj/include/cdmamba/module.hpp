#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdmamba/tensor.hpp"

namespace cdmamba {

/// Seeded generator used for all weight init and data synthesis.
using Rng = std::mt19937_64;

/// Uniform double in [lo, hi) from the top 53 bits of one draw. Spelled out
/// instead of std::uniform_real_distribution so streams match across
/// standard libraries.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Integer in [lo, hi] inclusive.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng() % span);
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = true);

struct NamedParam {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::size_t count_parameters(const ParamList& params);

}  // namespace cdmamba
