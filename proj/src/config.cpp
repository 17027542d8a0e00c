#include "cdmamba/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cdmamba/error.hpp"

namespace cdmamba {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    errno = 0;
    const auto x = std::strtoull(v.c_str(), nullptr, 10);
    if (errno == ERANGE) throw ConfigError("key '" + key + "': value out of range");
    return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

template <typename Container>
Container to_list(const std::string& key, const std::string& v) {
    Container out;
    if (v.empty() || v == "none") return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.insert(out.end(), to_size(key, trim(item)));
    return out;
}

template <typename Container>
std::string list_text(const Container& c) {
    if (c.empty()) return "none";
    std::string s;
    for (auto x : c) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
}

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    ModelConfig& m = model;
    if (key == "stem_channels") m.stem_channels = to_size(key, value);
    else if (key == "stem_kernel") m.stem_kernel = to_size(key, value);
    else if (key == "stage_channels") m.stage_channels = to_list<std::vector<std::size_t>>(key, value);
    else if (key == "stage_depths") m.stage_depths = to_list<std::vector<std::size_t>>(key, value);
    else if (key == "decoder_depths") m.decoder_depths = to_list<std::vector<std::size_t>>(key, value);
    else if (key == "aglgf_stages") m.aglgf_stages = to_list<std::set<std::size_t>>(key, value);
    else if (key == "num_classes") m.num_classes = to_size(key, value);
    else if (key == "expansion") m.expansion = to_size(key, value);
    else if (key == "conv1d_kernel") m.conv1d_kernel = to_size(key, value);
    else if (key == "conv2d_kernel") m.conv2d_kernel = to_size(key, value);
    else if (key == "state_size") m.state_size = to_size(key, value);
    else if (key == "ssm_skip") m.ssm_skip = to_bool(key, value);
    else if (key == "gate") m.gate = parse_gate_activation(value);
    else if (key == "lgf_dim_multiplier") m.lgf_width = parse_lgf_width(value);
    else if (key == "lambda1") train.loss.lambda1 = to_double(key, value);
    else if (key == "lambda2") train.loss.lambda2 = to_double(key, value);
    else if (key == "dice_smoothing") train.loss.dice_smoothing = to_double(key, value);
    else if (key == "lr") train.adam.lr = to_double(key, value);
    else if (key == "beta1") train.adam.beta1 = to_double(key, value);
    else if (key == "beta2") train.adam.beta2 = to_double(key, value);
    else if (key == "adam_eps") train.adam.eps = to_double(key, value);
    else if (key == "epochs") train.epochs = to_size(key, value);
    else if (key == "batch_size") train.batch_size = to_size(key, value);
    else if (key == "seed") {
        seed = to_size(key, value);
        train.seed = seed;
    }
    else if (key == "data_dir") data_dir = value;
    else if (key == "split") {
        if (value != "all" && value != "train" && value != "val" && value != "test") {
            throw ConfigError("key 'split': expected all, train, val or test, got '" + value + "'");
        }
        split = value;
    }
    else if (key == "patch") patch = to_size(key, value);
    else if (key == "strict_labels") strict_labels = to_bool(key, value);
    else if (key == "synthetic") synthetic = to_bool(key, value);
    else if (key == "n") n = to_size(key, value);
    else if (key == "size") size = to_size(key, value);
    else if (key == "out_dir") out_dir = value;
    else if (key == "checkpoint") checkpoint = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (model.num_classes != 2) throw ConfigError("key 'num_classes': only 2 classes are supported");
    if (synthetic) {
        if (size < 16 || size % 8 != 0) throw ConfigError("key 'size': synthetic size must be >= 16 and divisible by 8");
        if (n == 0) throw ConfigError("key 'n': synthetic sample count must be positive");
    }
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string resolved_text(const RunConfig& c) {
    const ModelConfig& m = c.model;
    std::ostringstream os;
    os << "# model\n"
       << "stem_channels = " << m.stem_channels << "\n"
       << "stem_kernel = " << m.stem_kernel << "\n"
       << "stage_channels = " << list_text(m.stage_channels) << "\n"
       << "stage_depths = " << list_text(m.stage_depths) << "\n"
       << "decoder_depths = " << list_text(m.decoder_depths) << "\n"
       << "aglgf_stages = " << list_text(m.aglgf_stages) << "\n"
       << "num_classes = " << m.num_classes << "\n"
       << "expansion = " << m.expansion << "\n"
       << "conv1d_kernel = " << m.conv1d_kernel << "\n"
       << "conv2d_kernel = " << m.conv2d_kernel << "\n"
       << "state_size = " << m.state_size << "\n"
       << "ssm_skip = " << (m.ssm_skip ? "true" : "false") << "\n"
       << "gate = " << to_string(m.gate) << "\n"
       << "lgf_dim_multiplier = " << to_string(m.lgf_width) << "\n"
       << "# loss\n"
       << "lambda1 = " << num(c.train.loss.lambda1) << "\n"
       << "lambda2 = " << num(c.train.loss.lambda2) << "\n"
       << "dice_smoothing = " << num(c.train.loss.dice_smoothing) << "\n"
       << "# optimizer\n"
       << "lr = " << num(c.train.adam.lr) << "\n"
       << "beta1 = " << num(c.train.adam.beta1) << "\n"
       << "beta2 = " << num(c.train.adam.beta2) << "\n"
       << "adam_eps = " << num(c.train.adam.eps) << "\n"
       << "epochs = " << c.train.epochs << "\n"
       << "batch_size = " << c.train.batch_size << "\n"
       << "seed = " << c.seed << "\n"
       << "# data\n"
       << "data_dir = " << c.data_dir << "\n"
       << "split = " << c.split << "\n"
       << "patch = " << c.patch << "\n"
       << "strict_labels = " << (c.strict_labels ? "true" : "false") << "\n"
       << "synthetic = " << (c.synthetic ? "true" : "false") << "\n"
       << "n = " << c.n << "\n"
       << "size = " << c.size << "\n"
       << "# output\n"
       << "out_dir = " << c.out_dir << "\n"
       << "checkpoint = " << c.checkpoint << "\n";
    return os.str();
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base) {
    std::vector<AblationVariant> out;
    {
        RunConfig c = base;
        c.model.aglgf_stages.clear();
        out.push_back({"aglgf_stages", "none", c});
        for (std::size_t last = 1; last <= ModelConfig::kStages; ++last) {
            c.model.aglgf_stages.insert(last);
            out.push_back({"aglgf_stages", last == 1 ? "S1" : "S1-S" + std::to_string(last), c});
        }
    }
    for (auto g : {GateActivation::ReLU, GateActivation::SiLU, GateActivation::LeakyReLU, GateActivation::Sigmoid}) {
        RunConfig c = base;
        c.model.gate = g;
        out.push_back({"gate", to_string(g), c});
    }
    for (auto w : {LgfWidth::One, LgfWidth::OneAndHalf, LgfWidth::Two}) {
        RunConfig c = base;
        c.model.lgf_width = w;
        out.push_back({"lgf_dim", to_string(w), c});
    }
    for (auto [l1, l2] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}, {0.5, 1.0}, {1.0, 0.5}}) {
        RunConfig c = base;
        c.train.loss.lambda1 = l1;
        c.train.loss.lambda2 = l2;
        out.push_back({"loss", num(l1) + "/" + num(l2), c});
    }
    return out;
}

}  // namespace cdmamba
