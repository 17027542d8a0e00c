#include "cdmamba/verify.hpp"

#include <cmath>
#include <functional>

#include "cdmamba/blocks.hpp"
#include "cdmamba/error.hpp"
#include "cdmamba/grad_check.hpp"
#include "cdmamba/losses.hpp"
#include "cdmamba/model.hpp"
#include "cdmamba/ops.hpp"
#include "cdmamba/ssm.hpp"

namespace cdmamba {

const char* to_string(GradScope s) {
    switch (s) {
        case GradScope::Primitives: return "primitives";
        case GradScope::Ssm: return "ssm";
        case GradScope::Blocks: return "blocks";
        case GradScope::Model: return "model";
    }
    return "?";
}

GradScope parse_grad_scope(const std::string& name) {
    if (name == "primitives") return GradScope::Primitives;
    if (name == "ssm") return GradScope::Ssm;
    if (name == "blocks") return GradScope::Blocks;
    if (name == "model") return GradScope::Model;
    throw ConfigError("unknown gradcheck scope '" + name + "' (expected primitives, ssm, blocks or model)");
}

double scope_tolerance(GradScope s) {
    switch (s) {
        case GradScope::Primitives: return 1e-6;
        case GradScope::Ssm:
        case GradScope::Blocks: return 1e-4;
        case GradScope::Model: return 1e-3;
    }
    return 0;
}

namespace {

Tensor rand(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = uniform(rng, lo, hi);
    return Tensor::from(std::move(shape), std::move(v));
}

// |x| in [0.1, 1] with random sign, for ops with a kink at zero.
Tensor away_from_zero(Shape shape, Rng& rng) {
    Tensor t = rand(std::move(shape), rng, 0.1, 1.0);
    for (auto& x : t.mutable_data()) x = uniform(rng, 0.0, 1.0) < 0.5 ? -x : x;
    return t;
}

// Moves freshly initialized parameters off their special values (zero
// biases, unit gains, tiny dt) so every gradient has a measurable size.
void randomize(const ParamList& params, Rng& rng) {
    auto ends_with = [](const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    for (const auto& p : params) {
        Tensor t = p.tensor;
        for (auto& v : t.mutable_data()) {
            if (ends_with(p.name, "dt_bias")) v = uniform(rng, -1.0, 0.5);
            else if (ends_with(p.name, "a_log")) v = uniform(rng, -1.0, 0.5);
            else if (ends_with(p.name, "gamma")) v = uniform(rng, 0.5, 1.5);
            else if (ends_with(p.name, "bias") || ends_with(p.name, "beta")) v = uniform(rng, 0.1, 0.6);
        }
    }
}

std::vector<Tensor> tensors(const ParamList& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

class Suite {
public:
    Suite(double tol, std::uint64_t seed) : tol_(tol), rng_(seed) {}

    Rng& rng() { return rng_; }

    /// Checks a tensor-valued `f` through a fixed random projection to a scalar.
    void tensor_fn(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                   std::size_t max_coords = 0) {
        const Tensor probe = f();
        const Tensor weights = rand(probe.shape(), rng_);
        scalar_fn(name, [&] { return ops::sum_all(ops::mul(f(), weights)); }, inputs, max_coords);
    }

    void scalar_fn(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                   std::size_t max_coords = 0, double eps = 1e-5) {
        const auto report = grad_check(f, inputs, eps, max_coords);
        items_.push_back({name, report.max_rel_error, tol_, report.coords_checked, report.worst_input, report.worst_coord,
                          report.worst_analytic, report.worst_numeric});
    }

    void add(GradCheckItem item) { items_.push_back(std::move(item)); }
    double tolerance() const { return tol_; }
    std::vector<GradCheckItem> take() { return std::move(items_); }

private:
    double tol_;
    Rng rng_;
    std::vector<GradCheckItem> items_;
};

void primitives(Suite& s) {
    Rng& r = s.rng();
    const Tensor a = rand({3, 4}, r), b = rand({3, 4}, r);
    const Tensor pos = rand({3, 4}, r, 0.5, 1.5);
    const Tensor kinked = away_from_zero({3, 4}, r);

    s.tensor_fn("add", [&] { return ops::add(a, b); }, {a, b});
    s.tensor_fn("sub", [&] { return ops::sub(a, b); }, {a, b});
    s.tensor_fn("mul", [&] { return ops::mul(a, b); }, {a, b});
    s.tensor_fn("div", [&] { return ops::div(a, pos); }, {a, pos});
    s.tensor_fn("scale", [&] { return ops::add_scalar(ops::scale(a, -1.7), 0.3); }, {a});
    const Tensor sc = rand({1}, r);
    s.tensor_fn("mul_scalar", [&] { return ops::mul_scalar(a, sc); }, {a, sc});
    const Tensor bias = rand({4}, r);
    s.tensor_fn("add_bias", [&] { return ops::add_bias(a, bias); }, {a, bias});

    const Tensor m = rand({4, 5}, r), lb = rand({5}, r);
    s.tensor_fn("matmul", [&] { return ops::matmul(a, m); }, {a, m});
    s.tensor_fn("linear", [&] { return ops::linear(a, m, lb); }, {a, m, lb});

    const Tensor cube = rand({2, 3, 4}, r);
    s.tensor_fn("reshape", [&] { return ops::reshape(cube, {6, 4}); }, {cube});
    s.tensor_fn("permute", [&] { return ops::permute(cube, {2, 0, 1}); }, {cube});
    const Tensor other = rand({2, 2, 4}, r);
    s.tensor_fn("concat", [&] { return ops::concat({cube, other}, 1); }, {cube, other});
    s.tensor_fn("split", [&] {
        auto parts = ops::split(cube, 2, {1, 3});
        return ops::add(ops::sum(parts[0], 2), ops::sum(parts[1], 2));
    }, {cube});
    s.tensor_fn("sum", [&] { return ops::sum(cube, 1); }, {cube});
    s.tensor_fn("mean", [&] { return ops::mean(cube, 0); }, {cube});
    s.scalar_fn("sum_all", [&] { return ops::sum_all(ops::mul(cube, cube)); }, {cube});
    s.scalar_fn("mean_all", [&] { return ops::mean_all(ops::mul(cube, cube)); }, {cube});

    s.tensor_fn("silu", [&] { return ops::silu(a); }, {a});
    s.tensor_fn("relu", [&] { return ops::relu(kinked); }, {kinked});
    s.tensor_fn("leaky_relu", [&] { return ops::leaky_relu(kinked); }, {kinked});
    s.tensor_fn("sigmoid", [&] { return ops::sigmoid(a); }, {a});
    s.tensor_fn("softplus", [&] { return ops::softplus(a); }, {a});
    s.tensor_fn("exp", [&] { return ops::exp(a); }, {a});
    s.tensor_fn("abs", [&] { return ops::abs(kinked); }, {kinked});
    s.tensor_fn("log", [&] { return ops::log(pos); }, {pos});
    s.tensor_fn("softmax", [&] { return ops::softmax(a); }, {a});
    const Tensor gamma = rand({4}, r, 0.5, 1.5), beta = rand({4}, r);
    s.tensor_fn("layer_norm", [&] { return ops::layer_norm(a, gamma, beta); }, {a, gamma, beta});

    const Tensor img = rand({4, 6, 6}, r);
    const Tensor w_dense = rand({3, 4, 3, 3}, r), b_dense = rand({3}, r);
    s.tensor_fn("conv2d", [&] { return ops::conv2d(img, w_dense, b_dense, 1, 1); }, {img, w_dense, b_dense});
    s.tensor_fn("conv2d_strided", [&] { return ops::conv2d(img, w_dense, b_dense, 2, 1); }, {img, w_dense, b_dense});
    const Tensor w_group = rand({4, 2, 3, 3}, r);
    s.tensor_fn("conv2d_grouped", [&] { return ops::conv2d(img, w_group, Tensor{}, 1, 1, 2); }, {img, w_group});
    const Tensor w_dw = rand({4, 1, 3, 3}, r), b_dw = rand({4}, r);
    s.tensor_fn("conv2d_depthwise", [&] { return ops::conv2d(img, w_dw, b_dw, 1, 1, 4); }, {img, w_dw, b_dw});
    const Tensor w_pw = rand({5, 4, 1, 1}, r);
    s.tensor_fn("conv2d_pointwise", [&] { return ops::conv2d(img, w_pw, Tensor{}, 1, 0); }, {img, w_pw});

    const Tensor seq = rand({7, 3}, r), w1 = rand({3, 4}, r);
    s.tensor_fn("conv1d_depthwise", [&] { return ops::conv1d_depthwise(seq, w1); }, {seq, w1});
    s.tensor_fn("bilinear_down", [&] { return ops::bilinear_resize(img, 1, 2); }, {img});
    s.tensor_fn("bilinear_up", [&] { return ops::bilinear_resize(img, 2, 1); }, {img});
    const Tensor toks = rand({12, 2}, r);
    s.tensor_fn("tokens_to_image", [&] { return ops::tokens_to_image(toks, 3, 4); }, {toks});
    s.tensor_fn("image_to_tokens", [&] { return ops::image_to_tokens(img); }, {img});

    const Tensor logits = rand({2, 2, 3, 3}, r, -2.0, 2.0);
    std::vector<std::uint8_t> labels(18);
    for (auto& y : labels) y = static_cast<std::uint8_t>(uniform_int(r, 0, 1));
    s.scalar_fn("ce_loss", [&] { return ce_loss(logits, labels); }, {logits});
    const Tensor prob = rand({2, 3, 3}, r, 0.05, 0.95);
    s.scalar_fn("dice_loss", [&] { return dice_loss(prob, labels, 1.0); }, {prob});
    s.scalar_fn("total_loss", [&] { return total_loss(logits, labels, LossConfig{}).total; }, {logits});
}

void ssm_suite(Suite& s) {
    Rng& r = s.rng();
    // phi' against a central difference, on both sides of the series switch.
    {
        GradCheckItem item{"phi_derivative", 0, s.tolerance(), 0, 0, 0, 0, 0};
        for (double z : {-3.0, -0.7, -1e-2, -2e-3, -5e-4, -5e-5, 1e-6, 0.4}) {
            const double h = 1e-6 * std::max(1.0, std::abs(z));
            const double numeric = (ssm::phi(z + h) - ssm::phi(z - h)) / (2 * h);
            item.max_rel_error = std::max(item.max_rel_error, relative_error(ssm::phi_derivative(z), numeric));
            ++item.coords;
        }
        s.add(item);
    }
    {
        const Tensor a = Tensor::from({2, 3}, {-1.0, -2.0, -0.5, -3.0, -1.5, -0.8});
        const Tensor bt = rand({3}, r), delta = rand({2}, r, 0.05, 0.5);
        s.tensor_fn("zoh_a_bar", [&] { return ssm::zoh_discretize(a, bt, delta).a_bar; }, {a, delta});
        s.tensor_fn("zoh_b_bar", [&] { return ssm::zoh_discretize(a, bt, delta).b_bar; }, {a, bt, delta});
    }
    const std::size_t L = 9, C = 3, N = 4;
    const Tensor x = rand({L, C}, r), delta = rand({L, C}, r, 0.05, 0.8);
    const Tensor a_log = rand({C, N}, r, -0.5, 1.0);
    const Tensor b = rand({L, N}, r), c = rand({L, N}, r), d = rand({C}, r);
    s.tensor_fn("scan", [&] { return ssm::scan(x, delta, a_log, b, c, d); }, {x, delta, a_log, b, c, d});
    s.tensor_fn("scan_no_skip", [&] { return ssm::scan(x, delta, a_log, b, c, Tensor{}); }, {x, delta, a_log, b, c});

    auto params = ssm::SsmParams::init(6, 3, true, r);
    ParamList list;
    params.collect("ssm", list);
    randomize(list, r);
    const Tensor xs = rand({8, 6}, r);
    auto inputs = tensors(list);
    inputs.push_back(xs);
    s.tensor_fn("selective_scan", [&] { return ssm::selective_scan(xs, params); }, inputs);
}

BlockConfig small_block(bool separable = false, LgfWidth width = LgfWidth::Two) {
    BlockConfig cfg;
    cfg.d_model = 4;
    cfg.state_size = 3;
    cfg.separable_conv = separable;
    cfg.lgf_width = width;
    return cfg;
}

template <typename Block>
std::vector<Tensor> block_inputs(const Block& block, std::initializer_list<Tensor> extra, Rng& rng) {
    ParamList list;
    block.collect("b", list);
    randomize(list, rng);
    auto inputs = tensors(list);
    inputs.insert(inputs.end(), extra);
    return inputs;
}

void blocks_suite(Suite& s) {
    Rng& r = s.rng();
    const TokenGrid grid{3, 4};
    const Tensor x = rand({12, 4}, r), y = rand({12, 4}, r);

    const auto conv_mamba = ConvMamba::init(small_block(), r);
    s.tensor_fn("conv_mamba", [&] { return conv_mamba(x, grid); }, block_inputs(conv_mamba, {x}, r));
    const auto srcm = Srcm::init(small_block(), r);
    s.tensor_fn("srcm", [&] { return srcm(x, grid); }, block_inputs(srcm, {x}, r));
    const auto srcm_sep = Srcm::init(small_block(true), r);
    s.tensor_fn("srcm_separable", [&] { return srcm_sep(x, grid); }, block_inputs(srcm_sep, {x}, r));
    const auto ggf = Ggf::init(small_block(), r);
    s.tensor_fn("ggf", [&] { return ggf(x, y, grid); }, block_inputs(ggf, {x, y}, r));
    for (auto width : {LgfWidth::One, LgfWidth::OneAndHalf, LgfWidth::Two}) {
        const auto lgf = Lgf::init(small_block(false, width), r);
        s.tensor_fn(std::string("lgf_x") + to_string(width), [&] { return lgf(x, y, grid); }, block_inputs(lgf, {x, y}, r));
    }
    const auto gate = AglgfGate::init(4, r);
    s.tensor_fn("aglgf_gate", [&] { return gate(x, y); }, block_inputs(gate, {x, y}, r));
    const auto aglgf = Aglgf::init(small_block(), r);
    s.tensor_fn("aglgf", [&] {
        auto [g1, g2] = aglgf(x, y, grid);
        return ops::abs(ops::sub(g1, g2));
    }, block_inputs(aglgf, {x, y}, r));
}

void model_suite(Suite& s) {
    Rng& r = s.rng();
    const auto model = CdMamba::init(ModelConfig::reduced(), 7);
    randomize(model.parameters(), r);
    const Tensor t1 = rand({3, 8, 8}, r, 0.0, 1.0), t2 = rand({3, 8, 8}, r, 0.0, 1.0);
    std::vector<std::uint8_t> labels(64);
    for (auto& v : labels) v = static_cast<std::uint8_t>(uniform_int(r, 0, 1));
    auto inputs = tensors(model.parameters());
    inputs.push_back(t1);
    inputs.push_back(t2);
    // Step 3e-5: at 1e-5 the roundoff in an O(1) loss swamps parameters whose
    // true gradient is ~1e-9; much larger steps start crossing ReLU kinks.
    s.scalar_fn("cdmamba_reduced_8x8",
                [&] { return total_loss(model.forward(t1, t2), labels, LossConfig{}).total; }, inputs, 12, 3e-5);
}

}  // namespace

std::vector<GradCheckItem> run_gradcheck(GradScope scope, std::uint64_t seed) {
    const bool saved = finite_check_enabled();
    set_finite_check(true);
    Suite suite(scope_tolerance(scope), seed);
    switch (scope) {
        case GradScope::Primitives: primitives(suite); break;
        case GradScope::Ssm: ssm_suite(suite); break;
        case GradScope::Blocks: blocks_suite(suite); break;
        case GradScope::Model: model_suite(suite); break;
    }
    set_finite_check(saved);
    return suite.take();
}

}  // namespace cdmamba
