#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdmamba/data.hpp"
#include "cdmamba/losses.hpp"
#include "cdmamba/metrics.hpp"
#include "cdmamba/model.hpp"
#include "cdmamba/optim.hpp"

namespace cdmamba {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;  // shuffling stream
    AdamConfig adam;
    LossConfig loss;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double total = 0;       // mean over the epoch's batches
    double ce = 0;
    double dice = 0;
    ConfusionCounts counts;  // train-set predictions made during the epoch
    Metrics metrics;
};

/// "epoch,L_total,L_ce,L_dice,Pre,Rec,F1,IoU,OA"
std::string log_header();
/// Fixed 8-significant-digit rendering so logs compare byte for byte.
std::string log_line(const EpochRecord& r);

/// Values of every parameter, in parameters() order.
using ParamSnapshot = std::vector<std::vector<double>>;
ParamSnapshot snapshot(const CdMamba& model);
void restore(CdMamba& model, const ParamSnapshot& snap);

struct TrainResult {
    std::vector<EpochRecord> log;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
    double best_f1 = -1;
    ParamSnapshot best;
};

/// Called after every epoch; useful for streaming the log.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training. Each epoch visits a Fisher-Yates permutation drawn
/// from cfg.seed; the last batch may be short. One tape per batch.
TrainResult train(CdMamba& model, const std::vector<SamplePair>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct EvalResult {
    ConfusionCounts counts;
    Metrics metrics;
    std::size_t samples = 0;
    std::size_t degenerate_samples = 0;  // samples whose own metrics hit a zero denominator
    std::vector<Mask> predictions;       // in input order
};

/// Worker count from CDMAMBA_THREADS (default 1, clamped to >= 1).
std::size_t worker_count();

/// Runs `fn(i)` for i in [0, n) over up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Predicts every pair and accumulates confusion counts. Samples without a
/// mask contribute predictions only.
EvalResult evaluate(const CdMamba& model, const std::vector<SamplePair>& data, std::size_t threads = worker_count());

}  // namespace cdmamba
