#include "cdmamba/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "cdmamba/error.hpp"

namespace cdmamba {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'D', 'M', 'B'};

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
    std::ifstream is;
    std::string path;

    void bytes(void* dst, std::size_t n) {
        is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (!is) throw DataError("checkpoint '" + path + "' is truncated");
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::string str() {
        const auto n = u32();
        if (n > (1u << 26)) throw DataError("checkpoint '" + path + "' is corrupt (string length " + std::to_string(n) + ")");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
};

struct Entry {
    Shape shape;
    std::vector<float> values;
};

std::pair<std::string, std::map<std::string, Entry>> read_file(const std::string& path) {
    Reader r{std::ifstream(path, std::ios::binary), path};
    if (!r.is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("'" + path + "' is not a checkpoint file");
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint '" + path + "' has version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    }
    std::string config = r.str();
    const auto count = r.u32();
    std::map<std::string, Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        Entry e;
        const auto rank = r.u32();
        if (rank > 8) throw DataError("checkpoint '" + path + "' is corrupt (rank " + std::to_string(rank) + ")");
        for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
        e.values.resize(numel(e.shape));
        r.bytes(e.values.data(), e.values.size() * sizeof(float));
        entries.emplace(std::move(name), std::move(e));
    }
    return {std::move(config), std::move(entries)};
}

void fill(CdMamba& model, const std::map<std::string, Entry>& entries, const std::string& path) {
    auto params = model.parameters();
    for (auto& p : params) {
        auto it = entries.find(p.name);
        if (it == entries.end()) throw DataError("checkpoint '" + path + "' has no parameter '" + p.name + "'");
        if (it->second.shape != p.tensor.shape()) {
            throw DataError("checkpoint '" + path + "': parameter '" + p.name + "' expected shape " +
                            to_string(p.tensor.shape()) + ", found " + to_string(it->second.shape));
        }
        auto dst = p.tensor.mutable_data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = it->second.values[k];
    }
    if (entries.size() != params.size()) {
        throw DataError("checkpoint '" + path + "' holds " + std::to_string(entries.size()) + " parameters, model expects " +
                        std::to_string(params.size()));
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const CdMamba& model, const RunConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint '" + path + "'");
    os.write(kMagic, 4);
    put_u32(os, kCheckpointVersion);
    RunConfig embedded = cfg;
    embedded.model = model.config();
    put_string(os, resolved_text(embedded));
    const auto params = model.parameters();
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_string(os, p.name);
        put_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(d));
        std::vector<float> f(p.tensor.data().begin(), p.tensor.data().end());
        os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    if (!os) throw DataError("failed writing checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    auto [text, entries] = read_file(path);
    RunConfig cfg = parse_config(text);
    CdMamba model = CdMamba::init(cfg.model, cfg.seed);
    fill(model, entries, path);
    return {std::move(cfg), std::move(model)};
}

void load_weights(const std::string& path, CdMamba& model) {
    auto [text, entries] = read_file(path);
    fill(model, entries, path);
}

}  // namespace cdmamba
