#include "cdmamba/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cdmamba/error.hpp"

namespace fs = std::filesystem;

namespace cdmamba {

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Image8 read_png(const std::string& path, std::size_t channels) {
    if (channels != 1 && channels != 3) throw UsageError("read_png: channels must be 1 or 3");
    if (!fs::exists(path)) throw DataError("missing file: " + path);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw DataError("cannot decode PNG '" + path + "': " + img.message);
    }
    img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 out;
    out.height = img.height;
    out.width = img.width;
    out.channels = channels;
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot decode PNG '" + path + "': " + msg);
    }
    return out;
}

void write_png(const std::string& path, const Image8& image) {
    if (image.pixels.size() != image.height * image.width * image.channels) {
        throw UsageError("write_png: pixel buffer does not match dimensions");
    }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw DataError("cannot write PNG '" + path + "': " + img.message);
    }
}

namespace {

Tensor rgb_to_tensor(const Image8& img) {
    const std::size_t hw = img.height * img.width;
    std::vector<double> v(3 * hw);
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t c = 0; c < 3; ++c) v[c * hw + p] = img.pixels[p * 3 + c] / 255.0;
    return Tensor::from({3, img.height, img.width}, std::move(v));
}

Image8 tensor_to_rgb(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3) throw InputError("expected an image tensor [3,H,W], got " + to_string(t.shape()));
    Image8 img{t.dim(1), t.dim(2), 3, {}};
    const std::size_t hw = img.height * img.width;
    img.pixels.resize(3 * hw);
    auto v = t.data();
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t c = 0; c < 3; ++c) {
            const double x = std::clamp(v[c * hw + p], 0.0, 1.0);
            img.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(x * 255.0));
        }
    return img;
}

std::string size_text(const Image8& img) { return std::to_string(img.width) + "x" + std::to_string(img.height); }

}  // namespace

SamplePair load_unlabeled_pair(const std::string& dir, const std::string& id) {
    const std::string pa = dir + "/A/" + id + ".png", pb = dir + "/B/" + id + ".png";
    Image8 a = read_png(pa, 3);
    Image8 b = read_png(pb, 3);
    if (a.height != b.height || a.width != b.width) {
        throw DataError("size mismatch for '" + id + "': A is " + size_text(a) + ", B is " + size_text(b));
    }
    SamplePair pair;
    pair.id = id;
    pair.t1 = rgb_to_tensor(a);
    pair.t2 = rgb_to_tensor(b);
    return pair;
}

SamplePair load_pair(const std::string& dir, const std::string& id, bool strict_labels) {
    SamplePair pair = load_unlabeled_pair(dir, id);
    const std::string pl = dir + "/label/" + id + ".png";
    Image8 label = read_png(pl, 1);
    if (label.height != pair.t1.dim(1) || label.width != pair.t1.dim(2)) {
        throw DataError("size mismatch for '" + id + "': images are " + std::to_string(pair.t1.dim(2)) + "x" +
                        std::to_string(pair.t1.dim(1)) + ", label is " + size_text(label));
    }
    pair.gt = Mask::zeros(label.height, label.width);
    for (std::size_t i = 0; i < label.pixels.size(); ++i) {
        const std::uint8_t v = label.pixels[i];
        if (strict_labels && v != 0 && v != 255) {
            throw DataError("label '" + pl + "' is not binary: pixel " + std::to_string(i) + " has value " + std::to_string(v));
        }
        pair.gt.data[i] = v >= 128 ? 1 : 0;
    }
    return pair;
}

void write_pair(const std::string& dir, const SamplePair& pair) {
    for (const char* sub : {"A", "B", "label"}) fs::create_directories(fs::path(dir) / sub);
    write_png(dir + "/A/" + pair.id + ".png", tensor_to_rgb(pair.t1));
    write_png(dir + "/B/" + pair.id + ".png", tensor_to_rgb(pair.t2));
    Image8 label{pair.gt.height, pair.gt.width, 1, std::vector<std::uint8_t>(pair.gt.data.size())};
    for (std::size_t i = 0; i < label.pixels.size(); ++i) label.pixels[i] = pair.gt.data[i] ? 255 : 0;
    write_png(dir + "/label/" + pair.id + ".png", label);
}

std::vector<std::string> list_pair_ids(const std::string& dir) {
    const fs::path a = fs::path(dir) / "A";
    if (!fs::is_directory(a)) throw DataError("dataset directory '" + dir + "' has no A/ subdirectory");
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(a)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool has_label(const std::string& dir, const std::string& id) { return fs::exists(dir + "/label/" + id + ".png"); }

std::vector<SamplePair> patch_split(const SamplePair& pair, std::size_t patch) {
    const std::size_t h = pair.t1.dim(1), w = pair.t1.dim(2);
    if (patch == 0) throw ConfigError("patch size must be positive");
    if (h % patch != 0 || w % patch != 0) {
        throw ConfigError("image " + std::to_string(w) + "x" + std::to_string(h) + " is not divisible into " +
                          std::to_string(patch) + "-pixel patches (remainder " + std::to_string(w % patch) + "x" +
                          std::to_string(h % patch) + ")");
    }
    const bool labeled = !pair.gt.data.empty();
    auto crop = [&](const Tensor& img, std::size_t r0, std::size_t c0) {
        std::vector<double> v(3 * patch * patch);
        auto src = img.data();
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t r = 0; r < patch; ++r)
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((c * h + r0 + r) * w + c0), patch,
                            v.begin() + static_cast<std::ptrdiff_t>((c * patch + r) * patch));
        return Tensor::from({3, patch, patch}, std::move(v));
    };
    std::vector<SamplePair> out;
    for (std::size_t i = 0; i < h / patch; ++i) {
        for (std::size_t j = 0; j < w / patch; ++j) {
            SamplePair p;
            p.id = pair.id + "_r" + std::to_string(i) + "_c" + std::to_string(j);
            p.t1 = crop(pair.t1, i * patch, j * patch);
            p.t2 = crop(pair.t2, i * patch, j * patch);
            if (labeled) {
                p.gt = Mask::zeros(patch, patch);
                for (std::size_t r = 0; r < patch; ++r)
                    std::copy_n(pair.gt.data.begin() + static_cast<std::ptrdiff_t>((i * patch + r) * w + j * patch), patch,
                                p.gt.data.begin() + static_cast<std::ptrdiff_t>(r * patch));
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

void SplitManifest::validate(const std::vector<std::string>& all_ids) const {
    std::set<std::string> seen;
    for (const auto* list : {&train, &val, &test}) {
        for (const auto& id : *list) {
            if (!seen.insert(id).second) throw DataError("split manifest lists '" + id + "' more than once");
        }
    }
    if (!all_ids.empty()) {
        for (const auto& id : all_ids) {
            if (!seen.count(id)) throw DataError("split manifest does not cover sample '" + id + "'");
        }
        const std::set<std::string> known(all_ids.begin(), all_ids.end());
        for (const auto& id : seen) {
            if (!known.count(id)) throw DataError("split manifest names unknown sample '" + id + "'");
        }
    }
}

namespace {

std::vector<std::string> read_id_list(const fs::path& path) {
    std::vector<std::string> ids;
    std::ifstream is(path);
    if (!is) return ids;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

void write_id_list(const fs::path& path, const std::vector<std::string>& ids) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& id : ids) os << id << '\n';
}

}  // namespace

SplitManifest SplitManifest::read(const std::string& dir) {
    SplitManifest m;
    m.train = read_id_list(fs::path(dir) / "train.txt");
    m.val = read_id_list(fs::path(dir) / "val.txt");
    m.test = read_id_list(fs::path(dir) / "test.txt");
    m.validate();
    return m;
}

void SplitManifest::write(const std::string& dir) const {
    validate();
    fs::create_directories(dir);
    write_id_list(fs::path(dir) / "train.txt", train);
    write_id_list(fs::path(dir) / "val.txt", val);
    write_id_list(fs::path(dir) / "test.txt", test);
}

}  // namespace cdmamba
