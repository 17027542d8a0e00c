#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cdmamba/checkpoint.hpp"
#include "cdmamba/config.hpp"
#include "cdmamba/error.hpp"
#include "cdmamba/render.hpp"

using namespace cdmamba;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("cdmamba_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run(const std::string& args) {
    const std::string cmd = std::string(CDMAMBA_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kTinyConfig =
    "# reduced model for quick runs\n"
    "stage_channels = 4, 8, 8, 8\n"
    "stage_depths = 1,1,1,1\n"
    "stem_channels = 4\n"
    "state_size = 2\n"
    "synthetic = true\n"
    "n = 4\n"
    "size = 16\n"
    "epochs = 2\n"
    "batch_size = 2\n"
    "lr = 1e-3\n";

}  // namespace

TEST(Config, DefaultsMatchArchitecture) {
    RunConfig c;
    EXPECT_EQ(c.train.loss.lambda1, 0.5);
    EXPECT_EQ(c.train.loss.lambda2, 0.5);
    EXPECT_EQ(c.model.expansion, 2u);
    EXPECT_EQ(c.model.gate, GateActivation::ReLU);
    const auto text = resolved_text(c);
    EXPECT_NE(text.find("lambda1 = 0.5\n"), std::string::npos);
    EXPECT_NE(text.find("lambda2 = 0.5\n"), std::string::npos);
}

TEST(Config, ParsesValuesAndComments) {
    auto c = parse_config("seed = 7  # trailing comment\n\n  gate = silu\naglgf_stages = none\nlgf_dim_multiplier = 1.5\n");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.train.seed, 7u);
    EXPECT_EQ(c.model.gate, GateActivation::SiLU);
    EXPECT_TRUE(c.model.aglgf_stages.empty());
    EXPECT_EQ(c.model.lgf_width, LgfWidth::OneAndHalf);
}

TEST(Config, ResolvedTextRoundTrips) {
    auto c = parse_config(kTinyConfig);
    c.train.adam.lr = 0.1 + 0.2;  // not representable in few digits
    const auto text = resolved_text(c);
    auto back = parse_config(text);
    EXPECT_EQ(resolved_text(back), text);
    EXPECT_EQ(back.train.adam.lr, c.train.adam.lr);
    EXPECT_EQ(back.model.stage_channels, c.model.stage_channels);
}

TEST(Config, UnknownKeyNamed) {
    try {
        parse_config("learning_rate = 3\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
}

TEST(Config, BadValuesNamed) {
    try {
        parse_config("epochs = ten\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
    }
    EXPECT_THROW(parse_config("gate = tanh\n"), ConfigError);
    EXPECT_THROW(parse_config("split = dev\n"), ConfigError);
    EXPECT_THROW(parse_config("num_classes = 3\n"), ConfigError);
    try {
        parse_config("seed = 1\njust words\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Config, AblationVariants) {
    auto v = ablation_variants(RunConfig{});
    ASSERT_EQ(v.size(), 17u);
    EXPECT_EQ(v[0].name, "none");
    EXPECT_TRUE(v[0].config.model.aglgf_stages.empty());
    EXPECT_EQ(v[4].config.model.aglgf_stages, (std::set<std::size_t>{1, 2, 3, 4}));
    std::size_t gates = 0, losses = 0;
    for (const auto& a : v) {
        gates += a.group == "gate";
        losses += a.group == "loss";
    }
    EXPECT_EQ(gates, 4u);
    EXPECT_EQ(losses, 5u);
}

TEST(Checkpoint, RoundTripPreservesFloat32Weights) {
    auto dir = scratch("ckpt");
    auto cfg = parse_config(kTinyConfig);
    auto model = CdMamba::init(cfg.model, 3);
    save_checkpoint((dir / "m.ckpt").string(), model, cfg);
    auto loaded = load_checkpoint((dir / "m.ckpt").string());
    EXPECT_EQ(resolved_text(loaded.config), resolved_text(cfg));
    auto a = model.parameters(), b = loaded.model.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].name, b[i].name);
        for (std::size_t j = 0; j < a[i].tensor.numel(); ++j)
            ASSERT_EQ(b[i].tensor.at(j), static_cast<double>(static_cast<float>(a[i].tensor.at(j))));
    }
    fs::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchCitesBothShapes) {
    auto dir = scratch("ckpt_mismatch");
    auto cfg = parse_config(kTinyConfig);
    save_checkpoint((dir / "m.ckpt").string(), CdMamba::init(cfg.model, 0), cfg);
    auto wider = cfg.model;
    wider.stem_channels = 6;
    auto other = CdMamba::init(wider, 0);
    try {
        load_weights((dir / "m.ckpt").string(), other);
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("stem.weight"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[6,3,3,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4,3,3,3]"), std::string::npos) << msg;
    }
    fs::remove_all(dir);
}

TEST(Checkpoint, GarbageRejected) {
    auto dir = scratch("ckpt_garbage");
    std::ofstream(dir / "bad.ckpt") << "XXXXsomething";
    EXPECT_THROW(load_checkpoint((dir / "bad.ckpt").string()), DataError);
    EXPECT_THROW(load_checkpoint((dir / "missing.ckpt").string()), DataError);
    fs::remove_all(dir);
}

TEST(Render, OverlayColoursOnAllFourOutcomes) {
    Mask pred{2, 2, {1, 0, 1, 0}};
    Mask gt{2, 2, {1, 0, 0, 1}};
    auto img = confusion_overlay(pred, gt);
    ASSERT_EQ(img.channels, 3u);
    const std::vector<std::uint8_t> expected{255, 255, 255, 0, 0, 0, 255, 0, 0, 0, 255, 0};
    EXPECT_EQ(img.pixels, expected);
    EXPECT_THROW(confusion_overlay(pred, Mask::zeros(1, 4)), InputError);
}

TEST(Render, MaskIsGrayZeroOr255) {
    auto img = mask_image(Mask{1, 3, {0, 1, 0}});
    EXPECT_EQ(img.channels, 1u);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 0}));
}

TEST(Cli, TrainEvalPredictPipeline) {
    auto dir = scratch("pipeline");
    std::ofstream(dir / "tiny.cfg") << kTinyConfig;
    const std::string cfg = (dir / "tiny.cfg").string();
    ASSERT_EQ(run("train --config " + cfg + " --out " + (dir / "run1").string()), 0);
    ASSERT_EQ(run("train --config " + cfg + " --out " + (dir / "run2").string()), 0);
    for (auto f : {"config.resolved.txt", "train_log.csv", "final.ckpt", "best.ckpt"}) EXPECT_TRUE(fs::exists(dir / "run1" / f)) << f;
    const auto log = slurp(dir / "run1" / "train_log.csv");
    EXPECT_EQ(log, slurp(dir / "run2" / "train_log.csv"));
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
    EXPECT_EQ(log.rfind("epoch,L_total,L_ce,L_dice,Pre,Rec,F1,IoU,OA\n", 0), 0u);

    // the resolved config reproduces the run
    ASSERT_EQ(run("train --config " + (dir / "run1" / "config.resolved.txt").string() + " --out " + (dir / "run3").string()), 0);
    EXPECT_EQ(log, slurp(dir / "run3" / "train_log.csv"));

    ASSERT_EQ(run("synth --config " + cfg + " --out " + (dir / "data").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "data" / "train.txt"));
    const std::string ckpt = (dir / "run1" / "final.ckpt").string();
    ASSERT_EQ(run("eval --checkpoint " + ckpt + " --data " + (dir / "data").string() + " --out " + (dir / "eval").string()), 0);
    const auto report = slurp(dir / "eval" / "metrics.txt");
    EXPECT_NE(report.find("samples"), std::string::npos);
    EXPECT_NE(report.find("degenerate"), std::string::npos);

    ASSERT_EQ(run("predict --checkpoint " + ckpt + " --data " + (dir / "data").string() + " --out " + (dir / "pred").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "pred" / "synth_0001_mask.png"));
    EXPECT_TRUE(fs::exists(dir / "pred" / "synth_0001_overlay.png"));

    // without labels: masks only, still success
    fs::remove_all(dir / "data" / "label");
    ASSERT_EQ(run("predict --checkpoint " + ckpt + " --data " + (dir / "data").string() + " --out " + (dir / "pred2").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "pred2" / "synth_0001_mask.png"));
    EXPECT_FALSE(fs::exists(dir / "pred2" / "synth_0001_overlay.png"));
    fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
    auto dir = scratch("exit");
    std::ofstream(dir / "bad.cfg") << "no_such_key = 1\n";
    EXPECT_EQ(run("train --config " + (dir / "bad.cfg").string() + " --out " + dir.string()), 1);
    EXPECT_EQ(run("eval --checkpoint " + (dir / "missing.ckpt").string() + " --data " + dir.string()), 2);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("gradcheck --scope primitives"), 0);
    fs::remove_all(dir);
}
