#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cdmamba/tensor.hpp"

namespace cdmamba {

/// Binary change mask, row-major, values in {0, 1}.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    static Mask zeros(std::size_t height, std::size_t width) { return {height, width, std::vector<std::uint8_t>(height * width, 0)}; }
    std::uint8_t at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
    std::size_t count() const;
    bool operator==(const Mask&) const = default;
};

/// Bi-temporal pair: t1/t2 are [3,H,W] with values in [0,1].
struct SamplePair {
    std::string id;
    Tensor t1;
    Tensor t2;
    Mask gt;

    std::size_t height() const { return gt.height; }
    std::size_t width() const { return gt.width; }
};

/// 8-bit interleaved image as stored on disk.
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;
};

Image8 read_png(const std::string& path, std::size_t channels);
void write_png(const std::string& path, const Image8& image);

/// Reads <dir>/A/<id>.png, <dir>/B/<id>.png and <dir>/label/<id>.png.
/// Labels are binarized at 128; with strict_labels any value other than
/// 0 or 255 is rejected instead.
SamplePair load_pair(const std::string& dir, const std::string& id, bool strict_labels = false);
/// Writes the same layout; image values are quantized to 8 bits.
void write_pair(const std::string& dir, const SamplePair& pair);
/// Ids of every <dir>/A/*.png, sorted.
std::vector<std::string> list_pair_ids(const std::string& dir);
bool has_label(const std::string& dir, const std::string& id);
/// Loads A/B only; gt is left empty (0 x 0).
SamplePair load_unlabeled_pair(const std::string& dir, const std::string& id);

/// Non-overlapping row-major tiling into patch x patch sub-pairs with ids
/// suffixed _r<i>_c<j>.
std::vector<SamplePair> patch_split(const SamplePair& pair, std::size_t patch);

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    /// Disjointness check; with `all_ids` also checks the union covers them.
    void validate(const std::vector<std::string>& all_ids = {}) const;
    /// train.txt / val.txt / test.txt, one id per line; missing files are empty splits.
    static SplitManifest read(const std::string& dir);
    void write(const std::string& dir) const;
};

struct Rect {
    std::size_t top = 0;
    std::size_t left = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    bool contains(std::size_t row, std::size_t col) const {
        return row >= top && row < top + height && col >= left && col < left + width;
    }
};

/// A generated pair together with the building footprints painted into each image.
struct SynthSample {
    SamplePair pair;
    std::vector<Rect> before;
    std::vector<Rect> after;
};

/// Deterministic synthetic building-change pairs. Every 8th sample
/// (index % 8 == 0) has no change. Image values are multiples of 1/255.
std::vector<SynthSample> synth_generate_detailed(std::size_t n, std::size_t size, std::uint64_t seed);
std::vector<SamplePair> synth_generate(std::size_t n, std::size_t size, std::uint64_t seed);

}  // namespace cdmamba
