#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/kvconfig.hpp"
#include "pdnet/parallel.hpp"
#include "pdnet/preprocess.hpp"
#include "pdnet/synth.hpp"
#include "pdnet/trainer.hpp"

namespace pdnet {

struct AdditionOrder {
    std::string name;
    std::vector<SourceClass> classes;
};

struct ExperimentPlan {
    std::vector<SourceClass> base_classes;
    SourceClass holdout;
    std::vector<AdditionOrder> orders;
    std::vector<NormScheme> schemes{NormScheme::Trainset, NormScheme::Class, NormScheme::Measurement};
    std::vector<Domain> domains{Domain::Time, Domain::Freq};

    void validate() const {
        require(!base_classes.empty(), ErrorKind::Usage, "plan has no base classes");
        require(!schemes.empty() && !domains.empty(), ErrorKind::Usage, "plan has an empty scheme or domain grid");
        auto has = [](const std::vector<SourceClass>& v, const SourceClass& sc) {
            return std::find(v.begin(), v.end(), sc) != v.end();
        };
        require(!has(base_classes, holdout), ErrorKind::Usage, "holdout class " + holdout.name() + " is a base class");
        for (const auto& order : orders) {
            std::set<SourceClass> seen;
            for (const auto& sc : order.classes) {
                require(!(sc == holdout), ErrorKind::Usage,
                        "holdout class " + holdout.name() + " appears in " + order.name);
                require(!has(base_classes, sc), ErrorKind::Usage, sc.name() + " in " + order.name + " is a base class");
                require(seen.insert(sc).second, ErrorKind::Usage, "duplicate " + sc.name() + " in " + order.name);
            }
        }
    }

    /// Base classes of the time/frequency comparison, Pa+1.5 held out, and
    /// the remaining populated cells in ascending order (Order 1) and
    /// reversed (Order 2).
    static ExperimentPlan paper_default() {
        ExperimentPlan p;
        p.base_classes = {SourceClass::parse("Pa-1"), SourceClass::parse("Pa+1"), SourceClass::parse("Pr-2"),
                          SourceClass::parse("Pr+2")};
        p.holdout = SourceClass::parse("Pa+1.5");
        std::vector<SourceClass> rest;
        for (const auto& cell : table1()) {
            const auto& sc = cell.source;
            if (sc == p.holdout || std::find(p.base_classes.begin(), p.base_classes.end(), sc) != p.base_classes.end())
                continue;
            rest.push_back(sc);
        }
        p.orders.push_back({"O1", rest});
        std::reverse(rest.begin(), rest.end());
        p.orders.push_back({"O2", rest});
        return p;
    }
};

inline std::vector<SourceClass> parse_class_list(const KvConfig& kv, const std::string& key) {
    std::vector<SourceClass> out;
    for (const auto& name : kv.get_list(key)) {
        auto sc = SourceClass::parse(name);
        validate_source(sc);
        out.push_back(sc);
    }
    return out;
}

/// Plan keys: base, holdout, order1..orderN, schemes, domains. Missing keys
/// fall back to the defaults of paper_default().
inline ExperimentPlan parse_plan(const KvConfig& kv) {
    auto plan = ExperimentPlan::paper_default();
    if (kv.has("base")) plan.base_classes = parse_class_list(kv, "base");
    if (kv.has("holdout")) {
        plan.holdout = SourceClass::parse(kv.get("holdout"));
        validate_source(plan.holdout);
    }
    if (kv.has("order1")) {
        plan.orders.clear();
        for (int i = 1; kv.has("order" + std::to_string(i)); ++i)
            plan.orders.push_back({"O" + std::to_string(i), parse_class_list(kv, "order" + std::to_string(i))});
    }
    if (kv.has("schemes")) {
        plan.schemes.clear();
        for (const auto& s : kv.get_list("schemes")) plan.schemes.push_back(parse_scheme(s));
    }
    if (kv.has("domains")) {
        plan.domains.clear();
        for (const auto& s : kv.get_list("domains")) plan.domains.push_back(parse_domain(s));
    }
    plan.validate();
    return plan;
}

inline void require_classes(const Dataset& data, const std::vector<SourceClass>& classes) {
    auto counts = data.class_counts();
    for (const auto& sc : classes)
        require(counts.count(sc) != 0, ErrorKind::MissingClass, "dataset has no measurements of " + sc.name());
}

// ---------------------------------------------------------------------------
// Normalization x input-domain grid on the base classes.

struct GridCell {
    NormScheme scheme;
    Domain domain;
    MetricsReport report;
};

struct GridResult {
    std::vector<GridCell> cells;

    const GridCell& at(NormScheme s, Domain d) const {
        for (const auto& c : cells)
            if (c.scheme == s && c.domain == d) return c;
        fail(ErrorKind::Usage, "grid has no cell " + to_string(s) + "/" + to_string(d));
    }
};

inline TrainConfig with_preprocess(TrainConfig cfg, NormScheme s, Domain d) {
    cfg.preprocess.scheme = s;
    cfg.preprocess.domain = d;
    return cfg;
}

/// One full protocol (cfg.n_seeds runs) per (scheme, domain) cell.
inline GridResult run_baseline(const ExperimentPlan& plan, const Dataset& data, const TrainConfig& cfg,
                               std::uint64_t master_seed, std::size_t jobs = 1) {
    plan.validate();
    cfg.validate();
    require_classes(data, plan.base_classes);
    const auto base = data.subset(plan.base_classes);

    struct Job {
        std::size_t cell;
        std::size_t run;
    };
    GridResult grid;
    std::vector<Job> work;
    for (auto d : plan.domains) {
        for (auto s : plan.schemes) {
            for (std::size_t r = 0; r < cfg.n_seeds; ++r) work.push_back({grid.cells.size(), r});
            grid.cells.push_back({s, d, {}});
        }
    }
    std::vector<ConfusionMatrix> cms(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t i) {
        const auto& cell = grid.cells[work[i].cell];
        cms[i] = run_once(base, with_preprocess(cfg, cell.scheme, cell.domain), run_seed(master_seed, work[i].run)).confusion;
    });
    for (std::size_t c = 0; c < grid.cells.size(); ++c) {
        std::vector<ConfusionMatrix> runs(cms.begin() + static_cast<std::ptrdiff_t>(c * cfg.n_seeds),
                                          cms.begin() + static_cast<std::ptrdiff_t>((c + 1) * cfg.n_seeds));
        grid.cells[c].report = aggregate(runs);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Transfer over unseen U_i multiples.

struct TransferPoint {
    std::size_t step = 0;
    std::string added;  ///< "base" for step 0
    std::vector<SourceClass> train_classes;
    MetricsReport report;  ///< Ā over trained classes plus G and Ã
};

struct TransferCurve {
    NormScheme scheme;
    std::string order;
    std::vector<TransferPoint> points;
};

struct TransferRun {
    ConfusionMatrix confusion;
    double g = 0.0;
    std::size_t n_test = 0;
    std::size_t n_holdout = 0;
};

/// Trains from scratch on `classes` and scores the holdout class. The holdout
/// set is the test partition of the holdout class under the run's split.
inline TransferRun transfer_run(const Dataset& data, const std::vector<SourceClass>& classes,
                                const SourceClass& holdout, const TrainConfig& cfg, std::uint64_t seed) {
    auto split = stratified_split(data.subset(classes), cfg.split_fraction, seed);
    auto held = stratified_split(data.subset({holdout}), cfg.split_fraction, seed).test;
    const auto train_ids = split.train.ids();
    check_disjoint(train_ids, split.test.ids(), "test");
    check_disjoint(train_ids, held.ids(), "holdout");
    for (const auto& m : split.train.measurements)
        require(!(m.source == holdout), ErrorKind::LeakageDetected, "holdout class present in the train set");

    const auto& pc = cfg.preprocess;
    auto stats = fit_preprocess(split.train, pc);
    // The holdout class has no training statistics; class scaling uses its own.
    if (stats.scheme == NormScheme::Class)
        extend_class_stats(stats, raw_features(held, stats_domain(pc), pc.fft_size(held.length)));
    auto train_fs = transform(split.train, pc, stats);
    auto test_fs = transform(split.test, pc, stats);
    auto held_fs = transform(held, pc, stats);

    auto trained = train(train_fs, cfg, seed);
    TransferRun run;
    run.confusion = evaluate(trained.model, test_fs);
    run.g = generalization_rate(trained.model, held_fs, train_ids);
    run.n_test = test_fs.size();
    run.n_holdout = held_fs.size();
    return run;
}

struct TransferResult {
    std::vector<TransferCurve> curves;  ///< one per (scheme, order)

    const TransferCurve& at(NormScheme s, const std::string& order) const {
        for (const auto& c : curves)
            if (c.scheme == s && c.order == order) return c;
        fail(ErrorKind::Usage, "no transfer curve " + to_string(s) + "/" + order);
    }
};

/// Step 0 trains on the base classes; step k on base plus the first k
/// classes of the order. Every step retrains from scratch; identical class
/// sets (the base step, the full set) are trained once and shared.
inline TransferResult run_transfer(const ExperimentPlan& plan, const Dataset& data, const TrainConfig& cfg,
                                   std::uint64_t master_seed, std::size_t jobs = 1) {
    plan.validate();
    cfg.validate();
    std::vector<SourceClass> all = plan.base_classes;
    all.push_back(plan.holdout);
    for (const auto& o : plan.orders) all.insert(all.end(), o.classes.begin(), o.classes.end());
    require_classes(data, all);

    using Key = std::tuple<NormScheme, std::set<SourceClass>, std::size_t>;
    std::map<Key, std::size_t> index;
    struct Job {
        NormScheme scheme;
        std::vector<SourceClass> classes;
        std::size_t run;
    };
    std::vector<Job> work;
    auto class_set = [&](const AdditionOrder& o, std::size_t k) {
        std::vector<SourceClass> c = plan.base_classes;
        c.insert(c.end(), o.classes.begin(), o.classes.begin() + static_cast<std::ptrdiff_t>(k));
        return c;
    };
    for (auto s : plan.schemes)
        for (const auto& o : plan.orders)
            for (std::size_t k = 0; k <= o.classes.size(); ++k) {
                auto classes = class_set(o, k);
                for (std::size_t r = 0; r < cfg.n_seeds; ++r) {
                    Key key{s, std::set<SourceClass>(classes.begin(), classes.end()), r};
                    if (index.try_emplace(key, work.size()).second) work.push_back({s, classes, r});
                }
            }

    std::vector<TransferRun> runs(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t i) {
        const auto& j = work[i];
        runs[i] = transfer_run(data, j.classes, plan.holdout, with_preprocess(cfg, j.scheme, Domain::Time),
                               run_seed(master_seed, j.run));
    });

    TransferResult result;
    for (auto s : plan.schemes) {
        for (const auto& o : plan.orders) {
            TransferCurve curve{s, o.name, {}};
            for (std::size_t k = 0; k <= o.classes.size(); ++k) {
                auto classes = class_set(o, k);
                std::set<SourceClass> key_set(classes.begin(), classes.end());
                std::vector<ConfusionMatrix> cms;
                std::vector<double> gs;
                std::size_t n_test = 0, n_held = 0;
                for (std::size_t r = 0; r < cfg.n_seeds; ++r) {
                    const auto& run = runs[index.at(Key{s, key_set, r})];
                    cms.push_back(run.confusion);
                    gs.push_back(run.g);
                    n_test = run.n_test;
                    n_held = run.n_holdout;
                }
                TransferPoint pt;
                pt.step = k;
                pt.added = k == 0 ? "base" : o.classes[k - 1].name();
                pt.train_classes = classes;
                pt.report = aggregate(cms);
                attach_generalization(pt.report, gs, n_test, n_held);
                curve.points.push_back(std::move(pt));
            }
            result.curves.push_back(std::move(curve));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Scales

/// Data and training settings for the grid and the transfer curves.
struct ScaleSettings {
    SynthConfig grid_data;
    TrainConfig grid_train;
    SynthConfig transfer_data;
    TrainConfig transfer_train;
};

/// Table I counts, 20002-sample records, published protocol.
inline ScaleSettings paper_scale(std::uint64_t seed) {
    ScaleSettings s;
    s.grid_data = paper_synth_config(seed);
    s.grid_train = TrainConfig::paper();
    s.transfer_data = s.grid_data;
    s.transfer_train = s.grid_train;
    return s;
}

/// 2000-sample records sized for a single core.
inline ScaleSettings desk_scale(std::uint64_t seed) {
    ScaleSettings s;
    s.grid_data = desk_synth_config(400, seed);
    s.grid_train = TrainConfig::desk();
    s.grid_train.arch = Architecture::Standard;
    // The transfer stage retrains 30 models, so it keeps the compact width.
    s.transfer_data = desk_synth_config(300, seed);
    s.transfer_train = TrainConfig::desk();
    s.transfer_train.n_seeds = 2;
    return s;
}

inline ScaleSettings scale_settings(const std::string& name, std::uint64_t seed) {
    if (name == "desk") return desk_scale(seed);
    if (name == "paper") return paper_scale(seed);
    fail(ErrorKind::Usage, "unknown scale '" + name + "'");
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_grid_csv(std::ostream& out, const GridResult& grid) {
    out << "scheme,domain,run,Pa-,Pa+,Pr-,Pr+,A_bar\n";
    auto row = [&](const GridCell& c, const std::string& run, const std::array<double, kNumOutputClasses>& a,
                   double mean_a) {
        out << to_string(c.scheme) << ',' << to_string(c.domain) << ',' << run;
        for (std::size_t k = 0; k < kNumOutputClasses; ++k)
            out << ',' << (c.report.present[k] ? fmt_rate(a[k]) : std::string("NA"));
        out << ',' << fmt_rate(mean_a) << '\n';
    };
    for (const auto& c : grid.cells) {
        for (std::size_t r = 0; r < c.report.runs.size(); ++r)
            row(c, std::to_string(r), c.report.runs[r].a, c.report.runs[r].mean_a);
        row(c, "mean", c.report.a, c.report.mean_a);
    }
}

inline void write_transfer_csv(std::ostream& out, const TransferCurve& curve) {
    out << "step,added,n_classes,run,G,A_bar,A_tilde\n";
    for (const auto& p : curve.points) {
        for (std::size_t r = 0; r < p.report.runs.size(); ++r) {
            const auto& run = p.report.runs[r];
            out << p.step << ',' << p.added << ',' << p.train_classes.size() << ',' << r << ',' << fmt_rate(*run.g)
                << ',' << fmt_rate(run.mean_a) << ",NA\n";
        }
        out << p.step << ',' << p.added << ',' << p.train_classes.size() << ",mean," << fmt_rate(*p.report.g) << ','
            << fmt_rate(p.report.mean_a) << ',' << fmt_rate(*p.report.a_tilde) << '\n';
    }
}

/// Confusion rates of the final step of `curve` plus its G, Ā and Ã.
inline void write_final_csv(std::ostream& out, const TransferCurve& curve, const SourceClass& holdout) {
    const auto& p = curve.points.back();
    out << "truth,Pa-,Pa+,Pr-,Pr+\n";
    for (std::size_t r = 0; r < kNumOutputClasses; ++r) {
        out << output_class_name(static_cast<OutputClass>(r));
        for (std::size_t c = 0; c < kNumOutputClasses; ++c)
            out << ',' << (p.report.present[r] ? fmt_rate(p.report.mean_rates[r][c]) : std::string("NA"));
        out << '\n';
    }
    out << "metric,value\n";
    out << "scheme," << to_string(curve.scheme) << '\n';
    out << "order," << curve.order << '\n';
    out << "holdout," << holdout.name() << '\n';
    out << "A_bar," << fmt_rate(p.report.mean_a) << '\n';
    out << "G," << fmt_rate(*p.report.g) << '\n';
    out << "A_tilde," << fmt_rate(*p.report.a_tilde) << '\n';
}

}  // namespace pdnet
