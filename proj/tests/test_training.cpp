#include <gtest/gtest.h>

#include <cmath>

#include "cdmamba/error.hpp"
#include "cdmamba/losses.hpp"
#include "cdmamba/metrics.hpp"
#include "cdmamba/ops.hpp"
#include "cdmamba/optim.hpp"
#include "cdmamba/train.hpp"

using namespace cdmamba;

namespace {

struct FiniteGuard : ::testing::Environment {
    void SetUp() override { set_finite_check(true); }
};
const auto* const kGuard = ::testing::AddGlobalTestEnvironment(new FiniteGuard);

Mask mask_of(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) { return {h, w, std::move(v)}; }

Mask random_mask(std::size_t h, std::size_t w, Rng& rng) {
    Mask m = Mask::zeros(h, w);
    for (auto& v : m.data) v = static_cast<std::uint8_t>(rng() & 1u);
    return m;
}

// Logits that put +s on the labelled class and -s on the other.
Tensor confident_logits(const std::vector<std::uint8_t>& y, double s) {
    const std::size_t n = y.size();
    std::vector<double> v(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = y[i] ? -s : s;
        v[n + i] = y[i] ? s : -s;
    }
    return Tensor::from({2, 1, n}, v);
}

}  // namespace

TEST(CrossEntropy, UniformPredictionIsLn2) {
    std::vector<std::uint8_t> y{0, 1, 1, 0, 1, 0};
    EXPECT_NEAR(ce_loss(Tensor::zeros({2, 2, 3}), y).item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, SaturatedLogitsGiveNearZero) {
    std::vector<std::uint8_t> y{0, 1, 1, 0};
    EXPECT_LE(ce_loss(confident_logits(y, 20), y).item(), 1e-8);
}

TEST(CrossEntropy, ShiftInvariant) {
    Rng rng(1);
    auto logits = uniform_tensor({2, 3, 3}, 2.0, rng, false);
    std::vector<std::uint8_t> y{0, 1, 1, 0, 1, 0, 0, 0, 1};
    std::vector<double> shifted(logits.data().begin(), logits.data().end());
    for (std::size_t i = 0; i < 9; ++i) {
        const double c = uniform(rng, -5, 5);
        shifted[i] += c;
        shifted[9 + i] += c;
    }
    EXPECT_NEAR(ce_loss(logits, y).item(), ce_loss(Tensor::from({2, 3, 3}, shifted), y).item(), 1e-14);
}

TEST(CrossEntropy, BatchedMatchesMeanOfSingles) {
    Rng rng(2);
    auto a = uniform_tensor({2, 2, 2}, 3.0, rng, false), b = uniform_tensor({2, 2, 2}, 3.0, rng, false);
    std::vector<std::uint8_t> ya{1, 0, 0, 1}, yb{1, 1, 0, 0}, yab{1, 0, 0, 1, 1, 1, 0, 0};
    auto batched = ops::concat({ops::reshape(a, {1, 2, 2, 2}), ops::reshape(b, {1, 2, 2, 2})}, 0);
    EXPECT_NEAR(ce_loss(batched, yab).item(), 0.5 * (ce_loss(a, ya).item() + ce_loss(b, yb).item()), 1e-15);
}

TEST(CrossEntropy, BadLabelsRejected) {
    std::vector<std::uint8_t> y{0, 2};
    EXPECT_THROW(ce_loss(Tensor::zeros({2, 1, 2}), y), InputError);
    std::vector<std::uint8_t> short_y{0};
    EXPECT_THROW(ce_loss(Tensor::zeros({2, 1, 2}), short_y), InputError);
}

TEST(Dice, PerfectOverlapIsZero) {
    std::vector<std::uint8_t> y{1, 0, 1, 1};
    EXPECT_NEAR(dice_loss(Tensor::from({2, 2}, {1, 0, 1, 1}), y, 1.0).item(), 0.0, 1e-15);
}

TEST(Dice, EmptyMaskAndPredictionIsZero) {
    std::vector<std::uint8_t> y{0, 0, 0, 0};
    EXPECT_EQ(dice_loss(Tensor::zeros({2, 2}), y, 1.0).item(), 0.0);
}

TEST(Dice, HandComputedHalf) {
    std::vector<std::uint8_t> y{1, 0};
    EXPECT_NEAR(dice_loss(Tensor::from({1, 2}, {0.5, 0.5}), y, 1e-12).item(), 0.5, 1e-11);
}

TEST(Dice, OutOfRangeProbabilityRejected) {
    std::vector<std::uint8_t> y{1, 0};
    EXPECT_THROW(dice_loss(Tensor::from({1, 2}, {1.5, 0.0}), y), InputError);
}

TEST(TotalLoss, ZeroDiceWeightIsScaledCe) {
    Rng rng(3);
    auto logits = uniform_tensor({2, 2, 2}, 2.0, rng, false);
    std::vector<std::uint8_t> y{1, 0, 1, 0};
    LossConfig cfg{0.7, 0.0, 1.0};
    EXPECT_NEAR(total_loss(logits, y, cfg).total.item(), 0.7 * ce_loss(logits, y).item(), 1e-15);
}

TEST(TotalLoss, PerfectPredictionNearZero) {
    std::vector<std::uint8_t> y{0, 1, 1, 0};
    EXPECT_LE(total_loss(confident_logits(y, 20), y, LossConfig{}).total.item(), 1e-8);
}

TEST(TotalLoss, LinearInWeights) {
    Rng rng(4);
    auto logits = uniform_tensor({2, 2, 2}, 2.0, rng, false);
    std::vector<std::uint8_t> y{1, 0, 0, 0};
    auto one = total_loss(logits, y, LossConfig{0.3, 0.4, 1.0});
    auto two = total_loss(logits, y, LossConfig{0.6, 0.8, 1.0});
    EXPECT_NEAR(two.total.item(), 2 * one.total.item(), 1e-15);
    EXPECT_GE(one.total.item(), 0.0);
    EXPECT_NEAR(one.total.item(), 0.3 * one.ce.item() + 0.4 * one.dice.item(), 1e-15);
}

TEST(TotalLoss, InvalidWeightsRejected) {
    EXPECT_THROW((LossConfig{0, 0, 1}.validate()), ConfigError);
    EXPECT_THROW((LossConfig{-1, 1, 1}.validate()), ConfigError);
}

TEST(Adam, FirstStepIsLrTimesSign) {
    auto p = Tensor::from({4}, {1, 1, 1, 1}, true);
    Adam opt({{"p", p}}, AdamConfig{});
    const std::vector<double> g{0.3, -2.0, 1e-3, -50};
    std::copy(g.begin(), g.end(), p.mutable_grad().begin());
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) {
        // m_hat = g, v_hat = g^2 after bias correction
        const double expected = 1 - 1e-4 * g[i] / (std::abs(g[i]) + 1e-8);
        EXPECT_NEAR(p.at(i), expected, 1e-16);
        EXPECT_NEAR(p.at(i), 1 - 1e-4 * (g[i] > 0 ? 1 : -1), 1e-9);
    }
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    auto p = Tensor::from({3}, {0.1, -0.2, 0.3}, true);
    auto q = Tensor::from({2}, {5, 6}, true);  // never receives a gradient
    Adam opt({{"p", p}, {"q", q}}, AdamConfig{});
    for (int i = 0; i < 5; ++i) {
        opt.zero_grad();
        (void)p.mutable_grad();
        opt.step();
    }
    EXPECT_EQ(p.at(0), 0.1);
    EXPECT_EQ(p.at(1), -0.2);
    EXPECT_EQ(q.at(1), 6.0);
}

TEST(Adam, ZeroLearningRateIsBitIdentical) {
    Rng rng(5);
    auto p = uniform_tensor({10}, 1.0, rng, true);
    auto before = std::vector<double>(p.data().begin(), p.data().end());
    AdamConfig cfg;
    cfg.lr = 0;
    Adam opt({{"p", p}}, cfg);
    for (int i = 0; i < 3; ++i) {
        for (auto& g : p.mutable_grad()) g = uniform(rng, -1, 1);
        opt.step();
    }
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p.at(i), before[i]);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    auto p = Tensor::from({2}, {1, 1}, true);
    Adam opt({{"encoder.weight", p}}, AdamConfig{});
    p.mutable_grad()[1] = std::nan("");
    try {
        opt.step();
        FAIL();
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos);
    }
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
    auto run = [] {
        Rng rng(6);
        auto p = uniform_tensor({8}, 1.0, rng, true);
        Adam opt({{"p", p}}, AdamConfig{});
        for (int i = 0; i < 20; ++i) {
            opt.zero_grad();
            for (auto& g : p.mutable_grad()) g = uniform(rng, -1, 1);
            opt.step();
        }
        return std::vector<double>(p.data().begin(), p.data().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Confusion, HandEnumeratedExample) {
    auto c = confusion(mask_of(1, 4, {1, 1, 0, 1}), mask_of(1, 4, {1, 0, 0, 0}));
    EXPECT_EQ(c, (ConfusionCounts{1, 1, 2, 0}));
}

TEST(Confusion, AllOnes) {
    auto m = mask_of(2, 3, std::vector<std::uint8_t>(6, 1));
    EXPECT_EQ(confusion(m, m), (ConfusionCounts{6, 0, 0, 0}));
}

TEST(Confusion, ShapeMismatchRejected) {
    EXPECT_THROW(confusion(Mask::zeros(2, 3), Mask::zeros(3, 2)), InputError);
    EXPECT_THROW(confusion(mask_of(1, 1, {2}), Mask::zeros(1, 1)), InputError);
}

TEST(Metrics, WorkedExample) {
    auto m = metrics(ConfusionCounts{2, 6, 1, 1});
    EXPECT_NEAR(m.precision, 2.0 / 3, 1e-15);
    EXPECT_NEAR(m.recall, 2.0 / 3, 1e-15);
    EXPECT_NEAR(m.f1, 2.0 / 3, 1e-15);
    EXPECT_NEAR(m.iou, 0.5, 1e-15);
    EXPECT_NEAR(m.oa, 0.8, 1e-15);
    EXPECT_FALSE(m.degenerate);
}

TEST(Metrics, PerfectPrediction) {
    auto m = metrics(ConfusionCounts{5, 3, 0, 0});
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
    EXPECT_EQ(m.iou, 1.0);
    EXPECT_EQ(m.oa, 1.0);
}

TEST(Metrics, DegenerateIsZeroAndFlagged) {
    auto m = metrics(ConfusionCounts{0, 10, 0, 0});
    EXPECT_TRUE(m.degenerate);
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.f1, 0.0);
    EXPECT_EQ(m.oa, 1.0);
    EXPECT_TRUE(metrics(ConfusionCounts{}).degenerate);
}

TEST(Metrics, IdentitiesOnRandomCounts) {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        ConfusionCounts c{rng() % 50 + 1, rng() % 50, rng() % 50, rng() % 50};
        auto m = metrics(c);
        for (double v : {m.precision, m.recall, m.f1, m.iou, m.oa}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_LE(m.iou, m.f1);
        EXPECT_NEAR(m.iou, m.f1 / (2 - m.f1), 1e-14);
        EXPECT_NEAR(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall), 1e-14);
    }
}

TEST(Metrics, MatchesBruteForceLoop) {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = random_mask(16, 16, rng), g = random_mask(16, 16, rng);
        std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
        for (std::size_t r = 0; r < 16; ++r) {
            for (std::size_t c = 0; c < 16; ++c) {
                const bool pv = p.at(r, c) == 1, gv = g.at(r, c) == 1;
                if (pv && gv) ++tp;
                else if (!pv && !gv) ++tn;
                else if (pv) ++fp;
                else ++fn;
            }
        }
        auto counts = confusion(p, g);
        ASSERT_EQ(counts, (ConfusionCounts{tp, tn, fp, fn}));
        const double d = static_cast<double>(tp);
        auto m = metrics(counts);
        if (tp + fp > 0) {
            EXPECT_EQ(m.precision, d / static_cast<double>(tp + fp));
        }
        if (tp + fn > 0) {
            EXPECT_EQ(m.recall, d / static_cast<double>(tp + fn));
        }
        EXPECT_EQ(m.oa, static_cast<double>(tp + tn) / 256.0);
    }
}

TEST(Argmax, TiesGoToBackground) {
    auto m = argmax_mask(Tensor::from({2, 1, 3}, {0, 1, 2, 0, 2, 1}));
    EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(TrainLog, HeaderAndFormat) {
    EXPECT_EQ(log_header(), "epoch,L_total,L_ce,L_dice,Pre,Rec,F1,IoU,OA");
    EpochRecord r;
    r.epoch = 3;
    r.total = 0.5;
    r.ce = 0.25;
    r.dice = 0.75;
    r.metrics = metrics(ConfusionCounts{2, 6, 1, 1});
    EXPECT_EQ(log_line(r), "3,0.5,0.25,0.75,0.666667,0.666667,0.666667,0.500000,0.800000");
}

TEST(Train, OneEpochFourSamplesBatchTwoIsTwoSteps) {
    auto data = synth_generate(4, 16, 0);
    auto model = CdMamba::init(ModelConfig::reduced(), 0);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    auto r = train(model, data, cfg);
    EXPECT_EQ(r.steps, 2u);
    ASSERT_EQ(r.log.size(), 1u);
    EXPECT_EQ(r.log[0].counts.total(), 4u * 16 * 16);
}

TEST(Train, ShortLastBatch) {
    auto data = synth_generate(5, 16, 0);
    auto model = CdMamba::init(ModelConfig::reduced(), 0);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    EXPECT_EQ(train(model, data, cfg).steps, 6u);
}

TEST(Train, FixedSeedGivesIdenticalLog) {
    auto run = [] {
        auto data = synth_generate(4, 16, 1);
        auto model = CdMamba::init(ModelConfig::reduced(), 0);
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.batch_size = 2;
        cfg.adam.lr = 1e-3;
        std::string log;
        train(model, data, cfg, [&](const EpochRecord& e) { log += log_line(e) + "\n"; });
        return log;
    };
    const auto a = run();
    EXPECT_EQ(a, run());
    EXPECT_FALSE(a.empty());
}

TEST(Train, LossDecreasesOnSmallModel) {
    auto data = synth_generate(4, 16, 2);
    auto model = CdMamba::init(ModelConfig::reduced(), 0);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 2;
    cfg.adam.lr = 3e-3;
    auto r = train(model, data, cfg);
    EXPECT_LT(r.log.back().total, r.log.front().total);
    EXPECT_GE(r.best_epoch, 1u);
    EXPECT_EQ(r.best.size(), model.parameters().size());
}

TEST(Train, SnapshotRestoreRoundTrip) {
    auto model = CdMamba::init(ModelConfig::reduced(), 0);
    auto snap = snapshot(model);
    auto other = CdMamba::init(ModelConfig::reduced(), 1);
    restore(other, snap);
    EXPECT_EQ(snapshot(other), snap);
}

TEST(Train, EmptyOrUnlabeledDataRejected) {
    auto model = CdMamba::init(ModelConfig::reduced(), 0);
    EXPECT_THROW(train(model, {}, TrainConfig{}), InputError);
    auto data = synth_generate(2, 16, 0);
    data[1].gt = Mask{};
    EXPECT_THROW(train(model, data, TrainConfig{}), InputError);
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
    auto data = synth_generate(4, 16, 3);
    auto model = CdMamba::init(ModelConfig::reduced(), 0);
    auto one = evaluate(model, data, 1), three = evaluate(model, data, 3);
    EXPECT_EQ(one.counts, three.counts);
    EXPECT_EQ(one.predictions, three.predictions);
    EXPECT_EQ(one.samples, 4u);
}
