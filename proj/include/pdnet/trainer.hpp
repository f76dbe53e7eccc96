#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/nn.hpp"
#include "pdnet/kvconfig.hpp"
#include "pdnet/parallel.hpp"
#include "pdnet/preprocess.hpp"
#include "pdnet/rng.hpp"

namespace pdnet {

enum class Architecture { Standard, Compact };

inline std::string to_string(Architecture a) { return a == Architecture::Standard ? "standard" : "compact"; }

inline Architecture parse_architecture(const std::string& s) {
    if (s == "standard") return Architecture::Standard;
    if (s == "compact") return Architecture::Compact;
    fail(ErrorKind::Usage, "unknown architecture '" + s + "'");
}

struct TrainConfig {
    std::size_t batch_size = 64;
    double lr = 1e-4;
    std::size_t epochs = 30;
    std::size_t n_seeds = 15;
    double split_fraction = 0.8;
    PreprocessConfig preprocess;
    Architecture arch = Architecture::Standard;
    bool global_pool = false;

    void validate() const {
        require(batch_size >= 1, ErrorKind::Usage, "batch size must be >= 1");
        require(n_seeds >= 1, ErrorKind::Usage, "n_seeds must be >= 1");
        require(epochs >= 1, ErrorKind::Usage, "epochs must be >= 1");
        require(split_fraction > 0.0 && split_fraction < 1.0, ErrorKind::Usage, "split fraction must be in (0, 1)");
        require(lr > 0.0, ErrorKind::Usage, "learning rate must be positive");
    }

    nn::ModelSpec model_spec(std::size_t input_length) const {
        auto spec = arch == Architecture::Standard ? nn::ModelSpec::standard(input_length)
                                                   : nn::ModelSpec::compact(input_length);
        if (global_pool) spec.pool_window = 0;
        return spec;
    }

    /// Published protocol: batch 64, lr 1e-4, 15 seeds, 80/20 per class.
    static TrainConfig paper() { return {}; }

    /// Single-core scale: narrow conv stack, fewer seeds.
    static TrainConfig desk() {
        TrainConfig c;
        c.n_seeds = 5;
        c.arch = Architecture::Compact;
        return c;
    }
};

/// Keys: epochs, seeds, batch, lr, split, arch, global_pool.
inline void apply_train_overrides(TrainConfig& cfg, const KvConfig& kv) {
    auto count = [&](const std::string& key, std::size_t current) {
        const auto v = kv.get_int(key, static_cast<std::int64_t>(current));
        require(v > 0, ErrorKind::Usage, "config key '" + key + "' must be positive");
        return static_cast<std::size_t>(v);
    };
    cfg.epochs = count("epochs", cfg.epochs);
    cfg.n_seeds = count("seeds", cfg.n_seeds);
    cfg.batch_size = count("batch", cfg.batch_size);
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.split_fraction = kv.get_double("split", cfg.split_fraction);
    if (kv.has("arch")) cfg.arch = parse_architecture(kv.get("arch"));
    if (kv.has("global_pool")) {
        const auto& v = kv.get("global_pool");
        require(v == "true" || v == "false", ErrorKind::Usage, "global_pool must be true or false");
        cfg.global_pool = v == "true";
    }
    cfg.validate();
}

/// Seed for run `i` of a protocol; it drives the split, the weight
/// initialization and the batch order of that run.
inline std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run) {
    return stream_seed(master_seed, 0x52554eULL, run);
}

using Model = nn::Model<float>;

struct TrainResult {
    Model model;
    std::vector<double> epoch_loss;
    double best_loss = 0.0;
    std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

inline std::vector<std::size_t> targets_of(const FeatureSet& fs) {
    std::vector<std::size_t> t(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) t[i] = index_of(from_source(fs.records[i].source));
    return t;
}

/// Mini-batch ADAM on mean cross-entropy. Each epoch reshuffles the order
/// from a (seed, epoch) stream; the last batch may be short. The returned
/// model is the parameter set with the lowest mean epoch training loss.
inline TrainResult train(const FeatureSet& train_set, const TrainConfig& cfg, std::uint64_t seed,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    require(!train_set.empty(), ErrorKind::Data, "cannot train on an empty train set");
    const auto targets = targets_of(train_set);

    TrainResult result;
    Model model(cfg.model_spec(train_set.length), seed);
    nn::AdamState<float> adam(model.params(), nn::AdamHyper{cfg.lr, 0.9, 0.999, 1e-8});
    nn::Workspace<float> ws;
    auto grads = nn::zero_grads(model);

    std::vector<std::size_t> order(train_set.size());
    std::vector<std::span<const double>> batch_in;
    std::vector<std::size_t> batch_t;
    result.best_loss = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = make_stream(seed, streams::shuffle, epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto end = std::min(order.size(), start + cfg.batch_size);
            batch_in.clear();
            batch_t.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch_in.emplace_back(train_set.records[order[i]].values);
                batch_t.push_back(targets[order[i]]);
            }
            for (auto& g : grads) g.zero();
            const double loss = nn::loss_and_grad(model, std::span<const std::span<const double>>(batch_in),
                                                  std::span<const std::size_t>(batch_t), ws, grads);
            require(std::isfinite(loss), ErrorKind::Data, "training loss diverged");
            loss_sum += loss * static_cast<double>(end - start);
            nn::adam_step(model.params(), grads, adam);
        }
        const double epoch_loss = loss_sum / static_cast<double>(order.size());
        result.epoch_loss.push_back(epoch_loss);
        // Epoch loss is accumulated while parameters move, so it describes the
        // parameters at the end of the epoch only approximately.
        if (epoch_loss < result.best_loss) {
            result.best_loss = epoch_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return result;
}

/// 4x4 counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
public:
    using Counts = std::array<std::array<std::uint64_t, kNumOutputClasses>, kNumOutputClasses>;
    using Rates = std::array<std::array<double, kNumOutputClasses>, kNumOutputClasses>;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(const Counts& c) : counts_(c) {}

    void add(OutputClass truth, OutputClass predicted) { ++counts_[index_of(truth)][index_of(predicted)]; }
    void add(std::size_t truth, std::size_t predicted) { ++counts_.at(truth).at(predicted); }

    const Counts& counts() const noexcept { return counts_; }
    std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return counts_.at(truth).at(pred); }

    std::uint64_t row_total(std::size_t truth) const {
        return std::accumulate(counts_[truth].begin(), counts_[truth].end(), std::uint64_t{0});
    }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (std::size_t r = 0; r < kNumOutputClasses; ++r) n += row_total(r);
        return n;
    }

    std::uint64_t trace() const {
        std::uint64_t n = 0;
        for (std::size_t r = 0; r < kNumOutputClasses; ++r) n += counts_[r][r];
        return n;
    }

    double accuracy() const { return total() ? static_cast<double>(trace()) / static_cast<double>(total()) : 0.0; }

    /// Classes with at least one ground-truth sample.
    std::array<bool, kNumOutputClasses> present() const {
        std::array<bool, kNumOutputClasses> p{};
        for (std::size_t r = 0; r < kNumOutputClasses; ++r) p[r] = row_total(r) > 0;
        return p;
    }

    /// Row-normalized rates; rows of absent classes are all zero.
    Rates rates() const {
        Rates out{};
        for (std::size_t r = 0; r < kNumOutputClasses; ++r) {
            const auto n = row_total(r);
            if (n == 0) continue;
            for (std::size_t c = 0; c < kNumOutputClasses; ++c)
                out[r][c] = static_cast<double>(counts_[r][c]) / static_cast<double>(n);
        }
        return out;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    Counts counts_{};
};

/// Batched argmax prediction for every record.
inline std::vector<std::size_t> predict(const Model& model, const FeatureSet& data, std::size_t batch = 256) {
    std::vector<std::size_t> out;
    out.reserve(data.size());
    nn::Workspace<float> ws;
    std::vector<std::span<const double>> in;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const auto end = std::min(data.size(), start + batch);
        in.clear();
        for (std::size_t i = start; i < end; ++i) in.emplace_back(data.records[i].values);
        nn::forward_batch(model, std::span<const std::span<const double>>(in), ws);
        for (std::size_t b = 0; b < end - start; ++b) {
            auto col = nn::logit_column(ws.logits, b);
            out.push_back(nn::argmax(col.data()));
        }
    }
    return out;
}

inline ConfusionMatrix confusion_from(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
    require(truth.size() == predicted.size(), ErrorKind::ShapeMismatch, "truth/prediction length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

inline ConfusionMatrix evaluate(const Model& model, const FeatureSet& test) {
    auto pred = predict(model, test);
    auto truth = targets_of(test);
    return confusion_from(truth, pred);
}

/// Throws LeakageDetected when any id of `held` occurs in `train_ids`.
inline void check_disjoint(const std::set<std::uint64_t>& train_ids, const std::set<std::uint64_t>& held,
                           const std::string& what) {
    for (auto id : held) {
        if (train_ids.count(id))
            fail(ErrorKind::LeakageDetected, what + ": measurement id " + std::to_string(id) + " is in the train set");
    }
}

/// Fraction of holdout measurements assigned to the holdout's output class.
inline double generalization_rate(std::span<const std::size_t> predictions, const FeatureSet& holdout) {
    require(!holdout.empty(), ErrorKind::Data, "empty holdout set");
    require(predictions.size() == holdout.size(), ErrorKind::ShapeMismatch, "prediction count mismatch");
    const auto sc = holdout.records.front().source;
    for (const auto& r : holdout.records)
        require(r.source == sc, ErrorKind::Data, "holdout set mixes source classes");
    const auto expected = index_of(from_source(sc));
    auto hits = std::count(predictions.begin(), predictions.end(), expected);
    return static_cast<double>(hits) / static_cast<double>(holdout.size());
}

inline double generalization_rate(const Model& model, const FeatureSet& holdout,
                                  const std::set<std::uint64_t>& train_ids) {
    check_disjoint(train_ids, holdout.ids(), "holdout");
    auto pred = predict(model, holdout);
    return generalization_rate(pred, holdout);
}

/// Sample-size-weighted mean of the trained-class rate and the holdout rate.
inline double combined_rate(double mean_a, std::size_t n_trained, double g, std::size_t n_holdout) {
    const auto n = static_cast<double>(n_trained + n_holdout);
    require(n > 0, ErrorKind::Data, "combined rate over zero samples");
    return (mean_a * static_cast<double>(n_trained) + g * static_cast<double>(n_holdout)) / n;
}

struct RunMetrics {
    std::array<double, kNumOutputClasses> a{};
    double mean_a = 0.0;
    std::optional<double> g;
};

struct MetricsReport {
    std::array<bool, kNumOutputClasses> present{};
    ConfusionMatrix::Rates mean_rates{};
    std::array<double, kNumOutputClasses> a{};  ///< diagonal of mean_rates
    double mean_a = 0.0;                        ///< mean over present classes
    std::optional<double> g;
    std::optional<double> a_tilde;
    std::vector<RunMetrics> runs;
};

inline double diagonal_mean(const ConfusionMatrix::Rates& rates, const std::array<bool, kNumOutputClasses>& present) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < kNumOutputClasses; ++k) {
        if (!present[k]) continue;
        sum += rates[k][k];
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

/// Elementwise mean of row-normalized matrices. The sum runs over runs
/// sorted by their rate matrices, so the result is independent of input
/// order bit for bit.
inline MetricsReport aggregate(std::span<const ConfusionMatrix> runs) {
    require(!runs.empty(), ErrorKind::Data, "aggregate needs at least one run");
    MetricsReport rep;
    rep.present = runs.front().present();
    std::vector<ConfusionMatrix::Rates> rates;
    for (const auto& cm : runs) {
        require(cm.present() == rep.present, ErrorKind::ClassMismatch, "runs cover different class sets");
        rates.push_back(cm.rates());
        RunMetrics rm;
        for (std::size_t k = 0; k < kNumOutputClasses; ++k) rm.a[k] = rates.back()[k][k];
        rm.mean_a = diagonal_mean(rates.back(), rep.present);
        rep.runs.push_back(rm);
    }
    auto sorted = rates;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& r : sorted)
        for (std::size_t i = 0; i < kNumOutputClasses; ++i)
            for (std::size_t j = 0; j < kNumOutputClasses; ++j) rep.mean_rates[i][j] += r[i][j];
    for (auto& row : rep.mean_rates)
        for (auto& v : row) v /= static_cast<double>(runs.size());
    for (std::size_t k = 0; k < kNumOutputClasses; ++k) rep.a[k] = rep.mean_rates[k][k];
    rep.mean_a = diagonal_mean(rep.mean_rates, rep.present);
    return rep;
}

/// Attaches per-run generalization rates (same order as the runs) and the
/// combined rate weighted by test/holdout sizes.
inline void attach_generalization(MetricsReport& rep, std::span<const double> g_per_run, std::size_t n_trained,
                                  std::size_t n_holdout) {
    require(g_per_run.size() == rep.runs.size(), ErrorKind::ShapeMismatch, "one G value per run expected");
    auto sorted = std::vector<double>(g_per_run.begin(), g_per_run.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    for (std::size_t i = 0; i < g_per_run.size(); ++i) rep.runs[i].g = g_per_run[i];
    rep.g = sum / static_cast<double>(sorted.size());
    rep.a_tilde = combined_rate(rep.mean_a, n_trained, *rep.g, n_holdout);
}

inline std::string fmt_rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

/// `run_id,class,A` rows per run, then `mean` rows and summary rows.
inline void write_metrics_csv(std::ostream& out, const MetricsReport& rep) {
    out << "run_id,class,A\n";
    for (std::size_t r = 0; r < rep.runs.size(); ++r) {
        for (std::size_t k = 0; k < kNumOutputClasses; ++k) {
            if (!rep.present[k]) continue;
            out << r << ',' << output_class_name(static_cast<OutputClass>(k)) << ',' << fmt_rate(rep.runs[r].a[k])
                << '\n';
        }
        out << r << ",A_bar," << fmt_rate(rep.runs[r].mean_a) << '\n';
        if (rep.runs[r].g) out << r << ",G," << fmt_rate(*rep.runs[r].g) << '\n';
    }
    for (std::size_t k = 0; k < kNumOutputClasses; ++k) {
        if (!rep.present[k]) continue;
        out << "mean," << output_class_name(static_cast<OutputClass>(k)) << ',' << fmt_rate(rep.a[k]) << '\n';
    }
    out << "mean,A_bar," << fmt_rate(rep.mean_a) << '\n';
    if (rep.g) out << "mean,G," << fmt_rate(*rep.g) << '\n';
    if (rep.a_tilde) out << "mean,A_tilde," << fmt_rate(*rep.a_tilde) << '\n';
}

/// One protocol run: split, preprocess, train, evaluate.
struct SeedRun {
    std::uint64_t seed = 0;
    ConfusionMatrix confusion;
    double train_accuracy = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

inline SeedRun run_once(const Dataset& data, const TrainConfig& cfg, std::uint64_t seed) {
    auto split = stratified_split(data, cfg.split_fraction, seed);
    check_disjoint(split.train.ids(), split.test.ids(), "test");
    auto prep = prepare(split.train, split.test, cfg.preprocess);
    auto trained = train(prep.train, cfg, seed);
    SeedRun run;
    run.seed = seed;
    run.confusion = evaluate(trained.model, prep.test);
    run.train_accuracy = evaluate(trained.model, prep.train).accuracy();
    run.n_train = prep.train.size();
    run.n_test = prep.test.size();
    return run;
}

/// cfg.n_seeds independent runs (fresh split and initialization each),
/// executed over `jobs` workers and aggregated in run order.
inline MetricsReport run_protocol(const Dataset& data, const TrainConfig& cfg, std::uint64_t master_seed,
                                  std::size_t jobs = 1) {
    cfg.validate();
    std::vector<ConfusionMatrix> cms(cfg.n_seeds);
    parallel_for(cfg.n_seeds, jobs, [&](std::size_t i) { cms[i] = run_once(data, cfg, run_seed(master_seed, i)).confusion; });
    return aggregate(cms);
}

}  // namespace pdnet
