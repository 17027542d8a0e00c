#include "cdmamba/train.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba {

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    adam.validate();
    loss.validate();
}

std::string log_header() { return "epoch,L_total,L_ce,L_dice,Pre,Rec,F1,IoU,OA"; }

std::string log_line(const EpochRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.8g,%.8g,%.8g,%.6f,%.6f,%.6f,%.6f,%.6f", r.epoch, r.total, r.ce, r.dice,
                  r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.iou, r.metrics.oa);
    return buf;
}

ParamSnapshot snapshot(const CdMamba& model) {
    ParamSnapshot s;
    for (const auto& p : model.parameters()) s.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return s;
}

void restore(CdMamba& model, const ParamSnapshot& snap) {
    auto params = model.parameters();
    if (params.size() != snap.size()) throw UsageError("restore: snapshot does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.mutable_data();
        if (dst.size() != snap[i].size()) throw UsageError("restore: size mismatch for '" + params[i].name + "'");
        std::copy(snap[i].begin(), snap[i].end(), dst.begin());
    }
}

namespace {

void check_dataset(const std::vector<SamplePair>& data) {
    if (data.empty()) throw InputError("training set is empty");
    for (const auto& s : data) {
        if (s.gt.data.empty()) throw InputError("training sample '" + s.id + "' has no label");
    }
}

}  // namespace

TrainResult train(CdMamba& model, const std::vector<SamplePair>& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    check_dataset(data);
    Adam adam(model.parameters(), cfg.adam);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    TrainResult result;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
            std::swap(order[i - 1], order[j]);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            adam.zero_grad();
            Tape tape;
            std::vector<Tensor> logits;
            std::vector<std::uint8_t> labels;
            for (std::size_t k = start; k < end; ++k) {
                const auto& s = data[order[k]];
                Tensor z = model.forward(s.t1, s.t2);
                rec.counts += confusion(argmax_mask(z), s.gt);
                logits.push_back(ops::reshape(z, {1, z.dim(0), z.dim(1), z.dim(2)}));
                labels.insert(labels.end(), s.gt.data.begin(), s.gt.data.end());
            }
            LossTerms loss = total_loss(ops::concat(logits, 0), labels, cfg.loss);
            tape.backward(loss.total);
            adam.step();
            rec.total += loss.total.item();
            rec.ce += loss.ce.item();
            rec.dice += loss.dice.item();
            ++batches;
            ++result.steps;
        }
        rec.total /= static_cast<double>(batches);
        rec.ce /= static_cast<double>(batches);
        rec.dice /= static_cast<double>(batches);
        rec.metrics = metrics(rec.counts);
        if (rec.metrics.f1 > result.best_f1) {
            result.best_f1 = rec.metrics.f1;
            result.best_epoch = epoch;
            result.best = snapshot(model);
        }
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

std::size_t worker_count() {
    const char* env = std::getenv("CDMAMBA_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) return 1;
    return static_cast<std::size_t>(v);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

EvalResult evaluate(const CdMamba& model, const std::vector<SamplePair>& data, std::size_t threads) {
    EvalResult r;
    r.samples = data.size();
    r.predictions.resize(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) {
        r.predictions[i] = argmax_mask(model.forward(data[i].t1, data[i].t2));
    });
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].gt.data.empty()) continue;
        const auto c = confusion(r.predictions[i], data[i].gt);
        if (metrics(c).degenerate) ++r.degenerate_samples;
        r.counts += c;
    }
    r.metrics = metrics(r.counts);
    return r;
}

}  // namespace cdmamba
