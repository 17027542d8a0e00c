#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cdmamba/blocks.hpp"
#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"
#include "cdmamba/verify.hpp"

using namespace cdmamba;

namespace {

struct FiniteGuard : ::testing::Environment {
    void SetUp() override { set_finite_check(true); }
};
const auto* const kGuard = ::testing::AddGlobalTestEnvironment(new FiniteGuard);

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = uniform(rng, lo, hi);
    return Tensor::from(std::move(shape), std::move(v));
}

void zero(Tensor t) {
    if (t.defined()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
}

BlockConfig small_cfg(std::size_t c = 8) {
    BlockConfig cfg;
    cfg.d_model = c;
    cfg.state_size = 4;
    return cfg;
}

// Every row of y equals the output projection's bias.
void expect_bias_only(const Tensor& y, const Linear& proj) {
    const std::size_t c = y.dim(1);
    for (std::size_t l = 0; l < y.dim(0); ++l)
        for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(y.at(l * c + j), proj.bias.at(j));
}

constexpr TokenGrid kGrid{4, 4};

}  // namespace

TEST(ConvMamba, ShapeAndWidth) {
    Rng rng(1);
    auto m = ConvMamba::init(small_cfg(), rng);
    EXPECT_EQ(m.gate_proj.weight.dim(1), 16u);
    auto y = m(rand_tensor({16, 8}, rng), kGrid);
    EXPECT_EQ(y.shape(), (Shape{16, 8}));
}

TEST(ConvMamba, AnnihilatedBranchesLeaveBias) {
    Rng rng(2);
    auto m = ConvMamba::init(small_cfg(), rng);
    zero(m.gate_proj.weight);
    zero(m.gate_proj.bias);
    zero(m.local_out.dense.weight);
    zero(m.local_out.dense.bias);
    expect_bias_only(m(rand_tensor({16, 8}, rng), kGrid), m.out_proj);
}

TEST(ConvMamba, OddChannelsRejected) {
    Rng rng(3);
    EXPECT_THROW(ConvMamba::init(small_cfg(7), rng), ConfigError);
}

TEST(ConvMamba, GridMismatchRejected) {
    Rng rng(4);
    auto m = ConvMamba::init(small_cfg(), rng);
    EXPECT_THROW(m(Tensor::zeros({15, 8}), kGrid), InputError);
}

TEST(ConvMamba, SeparableVariantKeepsShape) {
    Rng rng(5);
    auto cfg = small_cfg();
    cfg.separable_conv = true;
    auto m = ConvMamba::init(cfg, rng);
    EXPECT_EQ(m(rand_tensor({16, 8}, rng), kGrid).shape(), (Shape{16, 8}));
}

TEST(Srcm, ResidualIsolation) {
    Rng rng(6);
    auto s = Srcm::init(small_cfg(), rng);
    s.alpha.mutable_data()[0] = 0.625;
    zero(s.core.out_proj.weight);
    zero(s.core.out_proj.bias);
    auto x = rand_tensor({16, 8}, rng);
    auto r = s.residual(x, kGrid);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(r.at(i), 0.625 * x.at(i));
}

TEST(Srcm, ZeroAlphaGivesBiasImage) {
    Rng rng(7);
    auto s = Srcm::init(small_cfg(), rng);
    zero(s.alpha);
    zero(s.core.out_proj.weight);
    zero(s.core.out_proj.bias);
    s.post_norm.beta = rand_tensor({8}, rng);
    auto y = s(rand_tensor({16, 8}, rng), kGrid);
    // LN(0) = beta, so every token is beta W + b
    for (std::size_t j = 0; j < 8; ++j) {
        double expected = s.out_proj.bias.at(j);
        for (std::size_t i = 0; i < 8; ++i) expected += s.post_norm.beta.at(i) * s.out_proj.weight.at(i * 8 + j);
        for (std::size_t l = 0; l < 16; ++l) EXPECT_NEAR(y.at(l * 8 + j), expected, 1e-14);
    }
}

TEST(Srcm, ShapeForVariousSizes) {
    Rng rng(8);
    for (auto [h, w, c] : {std::tuple{1, 1, 2}, {2, 3, 4}, {5, 2, 6}}) {
        auto s = Srcm::init(small_cfg(c), rng);
        auto y = s(rand_tensor({std::size_t(h * w), std::size_t(c)}, rng), TokenGrid{std::size_t(h), std::size_t(w)});
        EXPECT_EQ(y.shape(), (Shape{std::size_t(h * w), std::size_t(c)}));
    }
}

TEST(Ggf, ClosedGateGivesBias) {
    Rng rng(9);
    auto g = Ggf::init(small_cfg(), rng);
    // guide branch input is zero, so SSM output is zero and ReLU(0) closes the gate
    zero(g.guide_path.in_proj.weight);
    zero(g.guide_path.in_proj.bias);
    expect_bias_only(g(rand_tensor({16, 8}, rng), rand_tensor({16, 8}, rng), kGrid), g.out_proj);
}

TEST(Ggf, ShapeMismatchRejected) {
    Rng rng(10);
    auto g = Ggf::init(small_cfg(), rng);
    EXPECT_THROW(g(Tensor::zeros({16, 8}), Tensor::zeros({16, 6}), kGrid), InputError);
}

TEST(Lgf, ClosedGateGivesBias) {
    Rng rng(11);
    auto l = Lgf::init(small_cfg(), rng);
    zero(l.guide_out.dense.weight);
    zero(l.guide_out.dense.bias);
    expect_bias_only(l(rand_tensor({16, 8}, rng), rand_tensor({16, 8}, rng), kGrid), l.out_proj);
}

TEST(Lgf, WidthsFollowMultiplier) {
    Rng rng(12);
    for (auto [w, width] : {std::pair{LgfWidth::One, 8u}, {LgfWidth::OneAndHalf, 12u}, {LgfWidth::Two, 16u}}) {
        auto cfg = small_cfg();
        cfg.lgf_width = w;
        auto l = Lgf::init(cfg, rng);
        EXPECT_EQ(l.guide_out.dense.weight.dim(0), width);
        EXPECT_EQ(l(rand_tensor({16, 8}, rng), rand_tensor({16, 8}, rng), kGrid).shape(), (Shape{16, 8}));
    }
}

TEST(Lgf, MultiplierParsing) {
    EXPECT_EQ(parse_lgf_width("1.5"), LgfWidth::OneAndHalf);
    EXPECT_THROW(parse_lgf_width("3"), ConfigError);
    EXPECT_EQ(parse_gate_activation("silu"), GateActivation::SiLU);
    EXPECT_THROW(parse_gate_activation("tanh"), ConfigError);
}

TEST(AglgfGate, EqualInputsPassThrough) {
    Rng rng(13);
    auto g = AglgfGate::init(8, rng);
    auto x = rand_tensor({16, 8}, rng);
    auto y = g(x, x);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.at(i), x.at(i), 1e-15);
}

TEST(AglgfGate, ScoresAreDistribution) {
    Rng rng(14);
    auto g = AglgfGate::init(8, rng);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = g.scores(rand_tensor({16, 8}, rng, -5, 5), rand_tensor({16, 8}, rng, -5, 5));
        EXPECT_GE(s.at(0), 0.0);
        EXPECT_GE(s.at(1), 0.0);
        EXPECT_NEAR(s.at(0) + s.at(1), 1.0, 1e-15);
    }
}

TEST(AglgfGate, SaturatedLogitsSelectGlobal) {
    Rng rng(15);
    auto g = AglgfGate::init(8, rng);
    zero(g.score.weight);
    g.score.bias.mutable_data()[0] = 20;
    g.score.bias.mutable_data()[1] = -20;
    auto a = rand_tensor({16, 8}, rng), b = rand_tensor({16, 8}, rng);
    auto y = g(a, b);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(y.at(i), a.at(i), 1e-8);
}

TEST(AglgfGate, ConvexCombination) {
    Rng rng(16);
    auto g = AglgfGate::init(8, rng);
    auto a = rand_tensor({16, 8}, rng), b = rand_tensor({16, 8}, rng);
    auto y = g(a, b);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_GE(y.at(i), std::min(a.at(i), b.at(i)) - 1e-15);
        EXPECT_LE(y.at(i), std::max(a.at(i), b.at(i)) + 1e-15);
    }
}

TEST(Aglgf, IdenticalInputsGiveIdenticalOutputs) {
    Rng rng(17);
    auto a = Aglgf::init(small_cfg(), rng);
    auto x = rand_tensor({16, 8}, rng);
    auto [g1, g2] = a(x, x, kGrid);
    EXPECT_EQ(g1.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(g1.at(i), g2.at(i));
}

TEST(Aglgf, SwapSwapsOutputs) {
    Rng rng(18);
    auto a = Aglgf::init(small_cfg(), rng);
    auto x = rand_tensor({16, 8}, rng), z = rand_tensor({16, 8}, rng);
    auto [p1, p2] = a(x, z, kGrid);
    auto [q1, q2] = a(z, x, kGrid);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        EXPECT_EQ(p1.at(i), q2.at(i));
        EXPECT_EQ(p2.at(i), q1.at(i));
    }
}

TEST(Blocks, ParameterNamesAreUnique) {
    Rng rng(19);
    ParamList params;
    Aglgf::init(small_cfg(), rng).collect("aglgf.", params);
    Srcm::init(small_cfg(), rng).collect("srcm.", params);
    std::vector<std::string> names;
    for (const auto& p : params) names.push_back(p.name);
    std::sort(names.begin(), names.end());
    EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
}

TEST(BlockGradients, WithinTolerance) {
    for (const auto& item : run_gradcheck(GradScope::Blocks)) {
        EXPECT_TRUE(item.passed()) << item.component << " rel err " << item.max_rel_error;
    }
}
