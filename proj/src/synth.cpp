#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cdmamba/data.hpp"
#include "cdmamba/error.hpp"
#include "cdmamba/module.hpp"

namespace cdmamba {

namespace {

constexpr std::size_t kCoarseGrid = 5;
constexpr double kNoiseAmplitude = 0.05;

struct Building {
    Rect rect;
    double color[3];
};

// Smooth background: a coarse random lattice upsampled bilinearly, per channel.
std::vector<double> smooth_background(std::size_t size, Rng& rng) {
    std::vector<double> out(3 * size * size);
    for (std::size_t c = 0; c < 3; ++c) {
        double lattice[kCoarseGrid][kCoarseGrid];
        for (auto& row : lattice)
            for (auto& v : row) v = uniform(rng, 0.15, 0.55);
        const double step = static_cast<double>(kCoarseGrid - 1) / static_cast<double>(size - 1);
        for (std::size_t r = 0; r < size; ++r) {
            const double y = r * step;
            const auto y0 = std::min(static_cast<std::size_t>(y), kCoarseGrid - 2);
            const double fy = y - y0;
            for (std::size_t col = 0; col < size; ++col) {
                const double x = col * step;
                const auto x0 = std::min(static_cast<std::size_t>(x), kCoarseGrid - 2);
                const double fx = x - x0;
                out[(c * size + r) * size + col] = (1 - fy) * ((1 - fx) * lattice[y0][x0] + fx * lattice[y0][x0 + 1]) +
                                                   fy * ((1 - fx) * lattice[y0 + 1][x0] + fx * lattice[y0 + 1][x0 + 1]);
            }
        }
    }
    return out;
}

Building random_building(std::size_t size, Rng& rng) {
    const auto lo = static_cast<std::int64_t>(std::max<std::size_t>(2, size / 8));
    const auto hi = static_cast<std::int64_t>(std::max<std::size_t>(3, size / 3));
    Building b{};
    b.rect.height = static_cast<std::size_t>(uniform_int(rng, lo, hi));
    b.rect.width = static_cast<std::size_t>(uniform_int(rng, lo, hi));
    b.rect.top = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(size - b.rect.height)));
    b.rect.left = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(size - b.rect.width)));
    for (auto& c : b.color) c = uniform(rng, 0.75, 1.0);
    return b;
}

Tensor render(const std::vector<double>& background, const std::vector<Building>& buildings, std::size_t size, Rng& rng) {
    std::vector<double> v = background;
    for (auto& x : v) x += uniform(rng, -kNoiseAmplitude, kNoiseAmplitude);
    for (const auto& b : buildings)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t r = b.rect.top; r < b.rect.top + b.rect.height; ++r)
                for (std::size_t col = b.rect.left; col < b.rect.left + b.rect.width; ++col)
                    v[(c * size + r) * size + col] = b.color[c];
    for (auto& x : v) x = std::round(std::clamp(x, 0.0, 1.0) * 255.0) / 255.0;
    return Tensor::from({3, size, size}, std::move(v));
}

std::vector<std::uint8_t> footprint(const std::vector<Building>& buildings, std::size_t size) {
    std::vector<std::uint8_t> f(size * size, 0);
    for (const auto& b : buildings)
        for (std::size_t r = b.rect.top; r < b.rect.top + b.rect.height; ++r)
            for (std::size_t col = b.rect.left; col < b.rect.left + b.rect.width; ++col) f[r * size + col] = 1;
    return f;
}

}  // namespace

std::vector<SynthSample> synth_generate_detailed(std::size_t n, std::size_t size, std::uint64_t seed) {
    if (size < 16) throw ConfigError("synthetic image size must be >= 16, got " + std::to_string(size));
    if (size % 8 != 0) throw ConfigError("synthetic image size must be divisible by 8, got " + std::to_string(size));
    Rng rng(seed);
    std::vector<SynthSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto background = smooth_background(size, rng);
        std::vector<Building> before;
        const auto k = uniform_int(rng, 1, 4);
        for (std::int64_t j = 0; j < k; ++j) before.push_back(random_building(size, rng));

        std::vector<Building> after;
        if (i % 8 == 0) {
            after = before;
        } else {
            bool changed = false;
            for (const auto& b : before) {
                if (uniform(rng, 0.0, 1.0) < 0.5) {
                    changed = true;
                } else {
                    after.push_back(b);
                }
            }
            if (!changed || uniform(rng, 0.0, 1.0) < 0.5) after.push_back(random_building(size, rng));
        }

        SynthSample s;
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04zu", i);
        s.pair.id = id;
        s.pair.t1 = render(background, before, size, rng);
        s.pair.t2 = render(background, after, size, rng);
        const auto f1 = footprint(before, size), f2 = footprint(after, size);
        s.pair.gt = Mask::zeros(size, size);
        for (std::size_t p = 0; p < f1.size(); ++p) s.pair.gt.data[p] = f1[p] ^ f2[p];
        for (const auto& b : before) s.before.push_back(b.rect);
        for (const auto& b : after) s.after.push_back(b.rect);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SamplePair> synth_generate(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::vector<SamplePair> out;
    for (auto& s : synth_generate_detailed(n, size, seed)) out.push_back(std::move(s.pair));
    return out;
}

}  // namespace cdmamba
