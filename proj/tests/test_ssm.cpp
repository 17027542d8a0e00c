#include <gtest/gtest.h>

#include <cmath>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"
#include "cdmamba/ssm.hpp"
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

Tensor repeat_rows(const std::vector<double>& row, std::size_t rows) {
    std::vector<double> v;
    for (std::size_t r = 0; r < rows; ++r) v.insert(v.end(), row.begin(), row.end());
    return Tensor::from({rows, row.size()}, v);
}

}  // namespace

TEST(Phi, TaylorMatchesExactNearZero) {
    for (double z : {1e-6, -1e-6, 3e-5, -7e-5}) {
        EXPECT_NEAR(ssm::phi_taylor(z), ssm::phi_exact(z), 1e-12 * ssm::phi_exact(z));
    }
}

TEST(Phi, BranchesAgreeAtSwitchPoint) {
    for (double z : {ssm::kTaylorThreshold, -ssm::kTaylorThreshold}) {
        const double rel = std::abs(ssm::phi_taylor(z) - ssm::phi_exact(z)) / ssm::phi_exact(z);
        EXPECT_LT(rel, 1e-10);
    }
}

TEST(Zoh, Ln2Example) {
    auto d = ssm::zoh_discretize(Tensor::from({1, 1}, {-1}), Tensor::from({1}, {1}), Tensor::from({1}, {std::log(2.0)}));
    EXPECT_NEAR(d.a_bar.item(), 0.5, 1e-15);
    EXPECT_NEAR(d.b_bar.item(), 0.5, 1e-15);
}

TEST(Zoh, SmallStepLimit) {
    const double dt = 1e-9;
    auto d = ssm::zoh_discretize(Tensor::from({1, 1}, {-2}), Tensor::from({1}, {3}), Tensor::from({1}, {dt}));
    EXPECT_NEAR(d.a_bar.item(), 1.0, 1e-8);
    EXPECT_NEAR(d.b_bar.item(), dt * 3, 1e-15);
}

TEST(Zoh, ClosedFormAwayFromZero) {
    Rng rng(1);
    auto a = rand_tensor({3, 4}, rng, -3, -0.1);
    auto b = rand_tensor({4}, rng);
    auto dt = rand_tensor({3}, rng, 0.01, 1);
    auto d = ssm::zoh_discretize(a, b, dt);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t n = 0; n < 4; ++n) {
            const double an = a.at(c * 4 + n), e = std::exp(dt.at(c) * an);
            EXPECT_NEAR(d.a_bar.at(c * 4 + n), e, 1e-15);
            EXPECT_NEAR(d.b_bar.at(c * 4 + n), (e - 1) / an * b.at(n), 1e-14);
            EXPECT_LT(std::abs(d.a_bar.at(c * 4 + n)), 1.0);
        }
    }
}

TEST(Zoh, NonPositiveStepRejected) {
    EXPECT_THROW(ssm::zoh_discretize(Tensor::from({1, 1}, {-1}), Tensor::from({1}, {1}), Tensor::from({1}, {0.0})),
                 ConfigError);
}

TEST(Oracle, HandUnrolledRamp) {
    auto y = ssm::scan_convolution_oracle(Tensor::from({3, 1}, {1, 1, 1}), 1.0, 1.0, 1.0);
    EXPECT_EQ(y.at(0), 1);
    EXPECT_EQ(y.at(1), 2);
    EXPECT_EQ(y.at(2), 3);
}

TEST(Oracle, ZeroDecayIsSingleTap) {
    auto y = ssm::scan_convolution_oracle(Tensor::from({3, 1}, {2, -1, 4}), 0.0, 0.5, 3.0);
    EXPECT_EQ(y.at(0), 3.0);
    EXPECT_EQ(y.at(1), -1.5);
    EXPECT_EQ(y.at(2), 6.0);
}

TEST(Oracle, ImpulseResponseIsGeometric) {
    std::vector<double> x(6, 0.0);
    x[0] = 1;
    auto y = ssm::scan_convolution_oracle(Tensor::from({6, 1}, x), 0.7, 0.4, 1.5);
    for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(y.at(t), 1.5 * std::pow(0.7, double(t)) * 0.4, 1e-15);
}

TEST(Oracle, TimeVaryingIsUsageError) {
    auto x = Tensor::from({2, 1}, {1, 1});
    auto a = Tensor::from({2, 1}, {0.5, 0.6});
    auto bc = Tensor::from({2, 1}, {1, 1});
    EXPECT_THROW(ssm::scan_convolution_oracle(x, a, bc, bc), UsageError);
}

TEST(Scan, MatchesOracleForTimeInvariantParameters) {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t len = 1 + uniform_int(rng, 0, 63), n = 1 + uniform_int(rng, 0, 3);
        auto x = rand_tensor({len, 1}, rng);
        auto a_log = rand_tensor({1, n}, rng, -2, 1);
        const double dt = uniform(rng, 0.01, 1.0);
        std::vector<double> b(n), c(n), a_bar(n), b_bar(n);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = uniform(rng, -1, 1);
            c[i] = uniform(rng, -1, 1);
            const double a = -std::exp(a_log.at(i));
            a_bar[i] = std::exp(dt * a);
            b_bar[i] = (a_bar[i] - 1) / a * b[i];
        }
        auto y = ssm::scan(x, Tensor::full({len, 1}, dt), a_log, repeat_rows(b, len), repeat_rows(c, len), Tensor{});
        auto ref = ssm::scan_convolution_oracle(x, a_bar, b_bar, c);
        for (std::size_t t = 0; t < len; ++t) EXPECT_NEAR(y.at(t), ref.at(t), 1e-10);
    }
}

TEST(Scan, ZeroInputGivesZeroOutput) {
    Rng rng(3);
    auto y = ssm::scan(Tensor::zeros({5, 2}), rand_tensor({5, 2}, rng, 0.1, 1), rand_tensor({2, 3}, rng),
                       rand_tensor({5, 3}, rng), rand_tensor({5, 3}, rng), rand_tensor({2}, rng));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Scan, FastDecayIsMemoryless) {
    Rng rng(4);
    const std::size_t len = 4, n = 2;
    auto x = rand_tensor({len, 1}, rng);
    auto b = rand_tensor({len, n}, rng), c = rand_tensor({len, n}, rng);
    const double a_log = 10, a = -std::exp(a_log), dskip = 0.3;
    auto y = ssm::scan(x, Tensor::full({len, 1}, 1.0), Tensor::full({1, n}, a_log), b, c, Tensor::from({1}, {dskip}));
    for (std::size_t t = 0; t < len; ++t) {
        double cb = 0;
        for (std::size_t i = 0; i < n; ++i) cb += c.at(t * n + i) * (-1 / a) * b.at(t * n + i);
        EXPECT_NEAR(y.at(t), cb * x.at(t) + dskip * x.at(t), 1e-15);
    }
}

TEST(Scan, EmptySequenceRejected) {
    EXPECT_THROW(ssm::scan(Tensor::zeros({0, 1}), Tensor::zeros({0, 1}), Tensor::zeros({1, 1}), Tensor::zeros({0, 1}),
                           Tensor::zeros({0, 1}), Tensor{}),
                 InputError);
}

TEST(Scan, ChunkedMatchesSequential) {
    Rng rng(5);
    const std::size_t len = 37, ch = 3, n = 4;
    auto x = rand_tensor({len, ch}, rng), dt = rand_tensor({len, ch}, rng, 0.01, 0.5);
    auto a_log = rand_tensor({ch, n}, rng), b = rand_tensor({len, n}, rng), c = rand_tensor({len, n}, rng);
    auto d = rand_tensor({ch}, rng);
    auto ref = ssm::scan(x, dt, a_log, b, c, d);
    for (std::size_t chunk : {1, 5, 8, 37, 100}) {
        for (std::size_t threads : {1, 3}) {
            auto y = ssm::scan_chunked(x, dt, a_log, b, c, d, chunk, threads);
            for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(y.at(i), ref.at(i), 1e-12);
        }
    }
}

TEST(Scan, BoundedInputBoundedState) {
    Rng rng(6);
    const std::size_t len = 2000;
    auto y = ssm::scan(Tensor::full({len, 1}, 1.0), Tensor::full({len, 1}, 0.05), Tensor::from({1, 1}, {0.0}),
                       Tensor::full({len, 1}, 1.0), Tensor::full({len, 1}, 1.0), Tensor{});
    // steady state of h = a h + b is b / (1 - a) = 1 / |A|
    EXPECT_NEAR(y.at(len - 1), 1.0, 1e-12);
}

TEST(SelectiveScan, ShapePreservedAndDeterministic) {
    Rng rng(7);
    auto p = ssm::SsmParams::init(6, 4, true, rng);
    auto x = rand_tensor({9, 6}, rng);
    auto y1 = ssm::selective_scan(x, p), y2 = ssm::selective_scan(x, p);
    EXPECT_EQ(y1.shape(), x.shape());
    for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.at(i), y2.at(i));
}

TEST(SelectiveScan, InitGivesStableDecay) {
    Rng rng(8);
    auto p = ssm::SsmParams::init(4, 16, true, rng);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t n = 0; n < 16; ++n) EXPECT_NEAR(-std::exp(p.a_log.at(c * 16 + n)), -double(n + 1), 1e-12);
    for (double b : p.dt_bias.data()) {
        const double dt = std::log1p(std::exp(b));
        EXPECT_GE(dt, 1e-3 - 1e-15);
        EXPECT_LE(dt, 1e-1 + 1e-15);
    }
}

TEST(SelectiveScan, WrongWidthRejected) {
    Rng rng(9);
    auto p = ssm::SsmParams::init(4, 2, true, rng);
    EXPECT_THROW(ssm::selective_scan(Tensor::zeros({3, 5}), p), InputError);
}

TEST(SsmGradients, WithinTolerance) {
    for (const auto& item : run_gradcheck(GradScope::Ssm)) {
        EXPECT_TRUE(item.passed()) << item.component << " rel err " << item.max_rel_error;
    }
}
