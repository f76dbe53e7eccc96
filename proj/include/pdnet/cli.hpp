#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/experiments.hpp"
#include "pdnet/kvconfig.hpp"
#include "pdnet/nn.hpp"
#include "pdnet/parallel.hpp"
#include "pdnet/preprocess.hpp"
#include "pdnet/report.hpp"
#include "pdnet/synth.hpp"
#include "pdnet/trainer.hpp"

namespace pdnet::cli {

inline constexpr const char* kVersion = "1.0.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int internal = 1;
inline constexpr int usage = 2;
inline constexpr int data = 3;
inline constexpr int leakage = 4;
}  // namespace exit_code

inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::Usage:
        case ErrorKind::InvalidParams: return exit_code::usage;
        case ErrorKind::LeakageDetected: return exit_code::leakage;
        default: return exit_code::data;
    }
}

/// `pdbench: error kind=<Kind> code=<n> message="<json-escaped text>"`
inline void print_error(std::ostream& err, std::string_view kind, int code, const std::string& message) {
    err << "pdbench: error kind=" << kind << " code=" << code << " message=" << nlohmann::json(message).dump()
        << '\n';
}

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct PreprocessOptions {
    std::string scheme = "measurement";
    std::string domain = "time";
    std::size_t n_fft = 0;
    bool normalize_before_fft = false;

    PreprocessConfig config() const {
        PreprocessConfig pc;
        pc.scheme = parse_scheme(scheme);
        pc.domain = parse_domain(domain);
        pc.n_fft = n_fft;
        pc.normalize_before_fft = normalize_before_fft;
        if (n_fft) require(is_power_of_two(n_fft), ErrorKind::Usage, "--n-fft must be a power of two");
        return pc;
    }
};

inline void add_preprocess_options(CLI::App* app, PreprocessOptions& o) {
    app->add_option("--scheme", o.scheme, "Normalization scheme")
        ->check(CLI::IsMember({"trainset", "class", "measurement"}));
    app->add_option("--domain", o.domain, "Input domain")->check(CLI::IsMember({"time", "fft"}));
    app->add_option("--n-fft", o.n_fft, "FFT size (power of two; 0 = next power of two >= l_s)");
    app->add_flag("--normalize-before-fft", o.normalize_before_fft, "Normalize time signals before the FFT");
}

inline nlohmann::json preprocess_json(const PreprocessConfig& pc) {
    return {{"scheme", to_string(pc.scheme)},
            {"domain", to_string(pc.domain)},
            {"n_fft", pc.n_fft},
            {"normalize_before_fft", pc.normalize_before_fft}};
}

inline PreprocessConfig preprocess_from_json(const nlohmann::json& j) {
    PreprocessConfig pc;
    pc.scheme = parse_scheme(j.at("scheme").get<std::string>());
    pc.domain = parse_domain(j.at("domain").get<std::string>());
    pc.n_fft = j.at("n_fft").get<std::size_t>();
    pc.normalize_before_fft = j.at("normalize_before_fft").get<bool>();
    return pc;
}

inline nlohmann::json report_json(const MetricsReport& rep) {
    nlohmann::json j;
    nlohmann::json classes = nlohmann::json::object();
    for (std::size_t k = 0; k < kNumOutputClasses; ++k)
        if (rep.present[k]) classes[output_class_name(static_cast<OutputClass>(k))] = rep.a[k];
    j["A"] = classes;
    j["A_bar"] = rep.mean_a;
    if (rep.g) j["G"] = *rep.g;
    if (rep.a_tilde) j["A_tilde"] = *rep.a_tilde;
    nlohmann::json rates = nlohmann::json::array();
    for (const auto& row : rep.mean_rates) rates.push_back(row);
    j["confusion_rates"] = rates;
    j["runs"] = rep.runs.size();
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) { write_file(path.string(), text); }

template <typename Writer>
std::string to_text(Writer&& w) {
    std::ostringstream s;
    w(s);
    return s.str();
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string config;
    std::string out;
    std::string csv;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 0;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream& err) {
    auto cfg = parse_synth_config(KvConfig::load(o.config));
    if (o.seed) cfg.master_seed = *o.seed;
    err << "synth: " << cfg.total() << " measurements of length " << cfg.signal.length << '\n';
    const auto data = synth_dataset(cfg, resolve_jobs(o.jobs));
    save(data, o.out);
    if (!o.csv.empty()) {
        std::ofstream csv(o.csv);
        require(static_cast<bool>(csv), ErrorKind::Io, "cannot write '" + o.csv + "'");
        write_csv(csv, data);
    }
    nlohmann::json summary;
    summary["file"] = o.out;
    summary["N"] = data.size();
    summary["l_s"] = data.length;
    summary["sample_rate"] = data.sample_rate;
    summary["master_seed"] = cfg.master_seed;
    for (const auto& [sc, n] : data.class_counts()) summary["classes"][sc.name()] = n;
    summary["digest"] = file_digest(o.out);
    out << summary.dump() << '\n';
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// normalize

struct NormalizeOptions {
    std::string in;
    std::string out;
    std::string fit_on;
    PreprocessOptions pre;
    std::size_t jobs = 0;
};

inline int cmd_normalize(const NormalizeOptions& o, std::ostream& out, std::ostream& err) {
    const auto pc = o.pre.config();
    const auto jobs = resolve_jobs(o.jobs);
    const auto data = load(o.in);
    const auto fit_data = o.fit_on.empty() ? data : load(o.fit_on);
    require(fit_data.length == data.length, ErrorKind::LengthMismatch, "--fit-on data has a different record length");
    err << "normalize: " << to_string(pc.scheme) << '/' << to_string(pc.domain) << " on " << data.size()
        << " measurements\n";
    const auto stats = fit_preprocess(fit_data, pc, jobs);
    const auto fs = transform(data, pc, stats, jobs);
    save_features(fs, o.out);
    nlohmann::json summary{{"file", o.out},
                           {"N", fs.size()},
                           {"length", fs.length},
                           {"preprocess", preprocess_json(pc)},
                           {"digest", file_digest(o.out)}};
    out << summary.dump() << '\n';
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// train / evaluate

struct TrainOptions {
    std::string data;
    std::string out;
    std::string metrics;
    std::vector<std::string> exclude;
    PreprocessOptions pre;
    std::uint64_t seed = 1;
    std::size_t epochs = 30;
    std::size_t batch = 64;
    double lr = 1e-4;
    double split = 0.8;
    std::string arch = "standard";
    std::size_t jobs = 0;
};

inline std::string meta_path(const std::string& model_path) { return model_path + ".json"; }

inline Dataset without_classes(const Dataset& d, const std::vector<std::string>& names) {
    std::vector<SourceClass> drop;
    for (const auto& n : names) drop.push_back(SourceClass::parse(n));
    std::vector<SourceClass> keep;
    for (const auto& [sc, n] : d.class_counts())
        if (std::find(drop.begin(), drop.end(), sc) == drop.end()) keep.push_back(sc);
    return d.subset(keep);
}

inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
    TrainConfig cfg;
    cfg.preprocess = o.pre.config();
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.lr = o.lr;
    cfg.split_fraction = o.split;
    cfg.n_seeds = 1;
    cfg.arch = parse_architecture(o.arch);
    cfg.validate();
    const auto jobs = resolve_jobs(o.jobs);

    const auto data = without_classes(load(o.data), o.exclude);
    require(!data.empty(), ErrorKind::Data, "no measurements left to train on");
    auto split = stratified_split(data, cfg.split_fraction, o.seed);
    check_disjoint(split.train.ids(), split.test.ids(), "test");
    auto prep = prepare(split.train, split.test, cfg.preprocess, jobs);
    err << "train: " << prep.train.size() << " train / " << prep.test.size() << " test, input length "
        << prep.train.length << '\n';
    auto result = train(prep.train, cfg, o.seed, [&](std::size_t epoch, double loss) {
        err << "epoch " << epoch + 1 << '/' << cfg.epochs << " loss " << fmt_rate(loss) << '\n';
    });
    nn::save_checkpoint(result.model, o.out);

    nlohmann::json meta;
    meta["seed"] = o.seed;
    meta["preprocess"] = preprocess_json(cfg.preprocess);
    meta["split"] = cfg.split_fraction;
    meta["excluded"] = o.exclude;
    meta["data_digest"] = file_digest(o.data);
    meta["train_ids"] = split.train.ids();
    write_file(meta_path(o.out), meta.dump() + "\n");

    auto rep = aggregate(std::vector<ConfusionMatrix>{evaluate(result.model, prep.test)});
    if (!o.metrics.empty()) write_file(o.metrics, to_text([&](std::ostream& s) { write_metrics_csv(s, rep); }));
    nlohmann::json summary{{"model", o.out},
                           {"best_epoch", result.best_epoch + 1},
                           {"best_loss", result.best_loss},
                           {"train_accuracy", evaluate(result.model, prep.train).accuracy()},
                           {"test", report_json(rep)}};
    out << summary.dump() << '\n';
    return exit_code::ok;
}

struct EvaluateOptions {
    std::string data;
    std::string model;
    std::string holdout;
    std::string out;
    std::string report;
    std::size_t jobs = 0;
};

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
    const auto jobs = resolve_jobs(o.jobs);
    const auto model = nn::load_checkpoint<float>(o.model);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path(o.model)));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Data, "bad training metadata '" + meta_path(o.model) + "': " + e.what());
    }
    const auto pc = preprocess_from_json(meta.at("preprocess"));
    const auto train_ids = meta.at("train_ids").get<std::set<std::uint64_t>>();

    const auto data = load(o.data);
    std::optional<SourceClass> holdout;
    if (!o.holdout.empty()) holdout = SourceClass::parse(o.holdout);
    Dataset train_part{data.sample_rate, data.length, {}}, test{data.sample_rate, data.length, {}},
        held{data.sample_rate, data.length, {}};
    for (const auto& m : data.measurements) {
        if (holdout && m.source == *holdout)
            held.measurements.push_back(m);
        else if (train_ids.count(m.id))
            train_part.measurements.push_back(m);
        else
            test.measurements.push_back(m);
    }
    check_disjoint(train_ids, held.ids(), "holdout " + o.holdout);
    require(!train_part.empty(), ErrorKind::Data, "data file does not contain the model's training measurements");
    require(!test.empty(), ErrorKind::Data, "no test measurements in the data file");
    require(pc.feature_length(data.length) == model.spec().input_length, ErrorKind::ShapeMismatch,
            "model input length does not match the data");

    auto stats = fit_preprocess(train_part, pc, jobs);
    if (holdout && stats.scheme == NormScheme::Class)
        extend_class_stats(stats, raw_features(held, stats_domain(pc), pc.fft_size(held.length)));
    const auto test_fs = transform(test, pc, stats, jobs);
    auto rep = aggregate(std::vector<ConfusionMatrix>{evaluate(model, test_fs)});
    if (holdout) {
        require(!held.empty(), ErrorKind::MissingClass, "holdout class " + o.holdout + " is not in the data");
        const auto held_fs = transform(held, pc, stats, jobs);
        const double g = generalization_rate(model, held_fs, train_ids);
        attach_generalization(rep, std::vector<double>{g}, test_fs.size(), held_fs.size());
    }
    err << "evaluate: " << test_fs.size() << " test measurements" << (holdout ? ", holdout " + o.holdout : "")
        << '\n';
    if (!o.out.empty()) write_file(o.out, to_text([&](std::ostream& s) { write_metrics_csv(s, rep); }));
    auto summary = report_json(rep);
    summary["model"] = o.model;
    summary["data_digest"] = file_digest(o.data);
    if (!o.report.empty()) write_file(o.report, summary.dump(2) + "\n");
    out << summary.dump() << '\n';
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentOptions {
    std::string plan;
    std::string scale = "desk";
    std::string data;
    std::string out;
    std::uint64_t seed = 1;
    std::size_t jobs = 0;
};

/// Plan file plus scale defaults, resolved into the settings of one run.
struct ExperimentSetup {
    ExperimentPlan plan;
    ScaleSettings scale;
    bool run_grid = true;
    bool run_transfer = true;
    NormScheme final_scheme = NormScheme::Trainset;
    std::string final_order;
    std::map<std::string, std::string> effective;  ///< hashed into the manifest
};

inline bool is_plan_key(const std::string& key) {
    static const std::set<std::string> plain{"base", "holdout", "schemes", "domains", "stages", "final.scheme",
                                             "final.order"};
    if (plain.count(key)) return true;
    if (key.rfind("order", 0) == 0 && key.size() > 5 &&
        key.find_first_not_of("0123456789", 5) == std::string::npos)
        return true;
    for (const char* prefix : {"data.", "train.", "transfer.data.", "transfer.train."})
        if (key.rfind(prefix, 0) == 0) return true;
    return false;
}

inline KvConfig with_prefix(const KvConfig& kv, const std::string& prefix) {
    KvConfig sub;
    for (const auto& [k, v] : kv.entries())
        if (k.rfind(prefix, 0) == 0) sub.set(k.substr(prefix.size()), v);
    return sub;
}

inline void describe(std::map<std::string, std::string>& out, const std::string& prefix, const SynthConfig& d) {
    out[prefix + "l_s"] = std::to_string(d.signal.length);
    out[prefix + "sample_rate"] = fmt_rate(d.signal.sample_rate);
    out[prefix + "path_loss_jitter"] = fmt_rate(d.signal.path_loss_jitter);
    out[prefix + "master_seed"] = std::to_string(d.master_seed);
    for (const auto& [sc, n] : d.counts) out[prefix + "count." + sc.name()] = std::to_string(n);
}

inline void describe(std::map<std::string, std::string>& out, const std::string& prefix, const TrainConfig& t) {
    out[prefix + "epochs"] = std::to_string(t.epochs);
    out[prefix + "seeds"] = std::to_string(t.n_seeds);
    out[prefix + "batch"] = std::to_string(t.batch_size);
    out[prefix + "lr"] = fmt_rate(t.lr);
    out[prefix + "split"] = fmt_rate(t.split_fraction);
    out[prefix + "arch"] = to_string(t.arch);
    out[prefix + "global_pool"] = t.global_pool ? "true" : "false";
}

inline ExperimentSetup resolve_setup(const KvConfig& kv, const std::string& scale, std::uint64_t seed) {
    for (const auto& [k, v] : kv.entries())
        require(is_plan_key(k), ErrorKind::Usage, "unknown plan key '" + k + "'");
    ExperimentSetup s;
    s.plan = parse_plan(kv);
    s.scale = scale_settings(scale, seed);

    const auto data_kv = with_prefix(kv, "data.");
    const auto train_kv = with_prefix(kv, "train.");
    apply_synth_overrides(s.scale.grid_data, data_kv);
    apply_synth_overrides(s.scale.transfer_data, data_kv);
    apply_synth_overrides(s.scale.transfer_data, with_prefix(kv, "transfer.data."));
    apply_train_overrides(s.scale.grid_train, train_kv);
    apply_train_overrides(s.scale.transfer_train, train_kv);
    apply_train_overrides(s.scale.transfer_train, with_prefix(kv, "transfer.train."));

    if (kv.has("stages")) {
        s.run_grid = s.run_transfer = false;
        for (const auto& st : kv.get_list("stages")) {
            if (st == "grid")
                s.run_grid = true;
            else if (st == "transfer")
                s.run_transfer = true;
            else
                fail(ErrorKind::Usage, "unknown stage '" + st + "'");
        }
    }
    if (kv.has("final.scheme")) s.final_scheme = parse_scheme(kv.get("final.scheme"));
    s.final_order = kv.get_or("final.order", s.plan.orders.empty() ? "" : s.plan.orders.front().name);
    if (s.run_transfer) {
        require(!s.plan.orders.empty(), ErrorKind::Usage, "transfer stage needs at least one order");
        require(std::find(s.plan.schemes.begin(), s.plan.schemes.end(), s.final_scheme) != s.plan.schemes.end(),
                ErrorKind::Usage, "final.scheme is not in the plan's schemes");
        require(std::any_of(s.plan.orders.begin(), s.plan.orders.end(),
                            [&](const AdditionOrder& o) { return o.name == s.final_order; }),
                ErrorKind::Usage, "final.order '" + s.final_order + "' is not a plan order");
    }

    auto& e = s.effective;
    e["scale"] = scale;
    e["seed"] = std::to_string(seed);
    auto names = [](const std::vector<SourceClass>& v) {
        std::string out;
        for (const auto& sc : v) out += (out.empty() ? "" : ",") + sc.name();
        return out;
    };
    e["plan.base"] = names(s.plan.base_classes);
    e["plan.holdout"] = s.plan.holdout.name();
    for (const auto& o : s.plan.orders) e["plan." + o.name] = names(o.classes);
    for (auto sc : s.plan.schemes) e["plan.schemes"] += (e["plan.schemes"].empty() ? "" : ",") + to_string(sc);
    for (auto d : s.plan.domains) e["plan.domains"] += (e["plan.domains"].empty() ? "" : ",") + to_string(d);
    e["stages"] = std::string(s.run_grid ? "grid" : "") + (s.run_grid && s.run_transfer ? "," : "") +
                  (s.run_transfer ? "transfer" : "");
    e["final"] = to_string(s.final_scheme) + "," + s.final_order;
    describe(e, "grid.data.", s.scale.grid_data);
    describe(e, "grid.train.", s.scale.grid_train);
    describe(e, "transfer.data.", s.scale.transfer_data);
    describe(e, "transfer.train.", s.scale.transfer_train);
    return s;
}

inline std::string config_hash(const std::map<std::string, std::string>& effective) {
    std::string canon;
    for (const auto& [k, v] : effective) canon += k + "=" + v + "\n";
    return hex64(fnv1a64(canon));
}

inline std::vector<Series> curve_series(const TransferResult& tr) {
    std::vector<Series> out;
    for (const auto& c : tr.curves) {
        Series s{short_name(c.scheme) + " " + c.order, {}, {}};
        for (const auto& p : c.points) {
            s.x_labels.push_back(p.step == 0 ? "base" : "+" + p.added);
            s.values.push_back(*p.report.g);
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline int cmd_experiment(const ExperimentOptions& o, std::ostream& out, std::ostream& err) {
    const auto started = utc_now();
    const auto jobs = resolve_jobs(o.jobs);
    const auto kv = o.plan.empty() ? KvConfig{} : KvConfig::load(o.plan);
    const auto setup = resolve_setup(kv, o.scale, o.seed);
    const std::filesystem::path dir(o.out);
    std::filesystem::create_directories(dir);

    nlohmann::json inputs = nlohmann::json::object();
    if (!o.plan.empty()) inputs["plan"] = {{"path", o.plan}, {"digest", file_digest(o.plan)}};
    auto dataset_for = [&](const SynthConfig& cfg, const char* stage) {
        if (!o.data.empty()) return load(o.data);
        err << "experiment: synthesizing " << cfg.total() << " measurements for " << stage << '\n';
        return synth_dataset(cfg, jobs);
    };
    if (!o.data.empty()) inputs["data"] = {{"path", o.data}, {"digest", file_digest(o.data)}};

    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        written.push_back(name);
    };

    std::optional<GridResult> grid;
    if (setup.run_grid) {
        const auto data = dataset_for(setup.scale.grid_data, "the grid");
        err << "experiment: grid of " << setup.plan.schemes.size() * setup.plan.domains.size() << " cells x "
            << setup.scale.grid_train.n_seeds << " runs\n";
        grid = run_baseline(setup.plan, data, setup.scale.grid_train, o.seed, jobs);
        emit("grid.csv", to_text([&](std::ostream& s) { write_grid_csv(s, *grid); }));
    }

    std::optional<TransferResult> transfer;
    if (setup.run_transfer) {
        const auto data = dataset_for(setup.scale.transfer_data, "the transfer curves");
        err << "experiment: transfer curves for " << setup.plan.schemes.size() << " schemes x "
            << setup.plan.orders.size() << " orders\n";
        transfer = run_transfer(setup.plan, data, setup.scale.transfer_train, o.seed, jobs);
        for (const auto& c : transfer->curves)
            emit("transfer_" + to_string(c.scheme) + "_" + c.order + ".csv",
                 to_text([&](std::ostream& s) { write_transfer_csv(s, c); }));
        const auto& fin = transfer->at(setup.final_scheme, setup.final_order);
        emit("final.csv", to_text([&](std::ostream& s) { write_final_csv(s, fin, setup.plan.holdout); }));
        const auto& last = fin.points.back().report;
        emit("confusion.svg", confusion_svg(last.mean_rates, last.present,
                                            "Full train set, " + short_name(fin.scheme) + " " + fin.order +
                                                ", holdout " + setup.plan.holdout.name(),
                                            last.g));
        emit("curve.svg", curve_svg(curve_series(*transfer), "G on holdout " + setup.plan.holdout.name()));
    } else if (grid && !grid->cells.empty()) {
        const auto& cell = grid->cells.front();
        emit("confusion.svg", confusion_svg(cell.report.mean_rates, cell.report.present,
                                            "Baseline, " + short_name(cell.scheme) + " " + to_string(cell.domain)));
    }

    nlohmann::json manifest;
    manifest["tool"] = "pdbench";
    manifest["version"] = kVersion;
    manifest["command"] = "experiment";
    manifest["scale"] = o.scale;
    manifest["master_seed"] = o.seed;
    const auto n_runs = std::max(setup.run_grid ? setup.scale.grid_train.n_seeds : 0,
                                 setup.run_transfer ? setup.scale.transfer_train.n_seeds : 0);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < n_runs; ++i) seeds.push_back(run_seed(o.seed, i));
    manifest["run_seeds"] = seeds;
    manifest["config_hash"] = config_hash(setup.effective);
    manifest["config"] = setup.effective;
    manifest["inputs"] = inputs;
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& name : written) outputs[name] = file_digest((dir / name).string());
    manifest["outputs"] = outputs;
    manifest["started_at"] = started;
    manifest["finished_at"] = utc_now();
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    nlohmann::json summary;
    summary["out"] = o.out;
    summary["config_hash"] = manifest["config_hash"];
    if (grid)
        for (const auto& c : grid->cells)
            summary["grid"][short_name(c.scheme) + "," + to_string(c.domain)] = c.report.mean_a;
    if (transfer)
        for (const auto& c : transfer->curves) {
            std::vector<double> g;
            for (const auto& p : c.points) g.push_back(*p.report.g);
            summary["transfer"][short_name(c.scheme) + "," + c.order] = g;
        }
    out << summary.dump() << '\n';
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// report

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path.string()));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        rows.push_back(std::move(row));
    }
    return rows;
}

struct ReportOptions {
    std::string in;
};

/// Summarizes the metric CSVs of an experiment directory as JSON on stdout.
inline int cmd_report(const ReportOptions& o, std::ostream& out, std::ostream&) {
    const std::filesystem::path dir(o.in);
    require(std::filesystem::is_directory(dir), ErrorKind::Io, "'" + o.in + "' is not a directory");
    nlohmann::json summary;
    bool found = false;
    if (std::filesystem::exists(dir / "grid.csv")) {
        found = true;
        for (const auto& row : read_csv(dir / "grid.csv"))
            if (row.size() == 8 && row[2] == "mean")
                summary["grid"][row[0] + "," + row[1]] = KvConfig::to_double("A_bar", row[7]);
    }
    std::vector<std::filesystem::path> curves;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("transfer_", 0) == 0 && entry.path().extension() == ".csv") curves.push_back(entry.path());
    }
    std::sort(curves.begin(), curves.end());
    for (const auto& path : curves) {
        found = true;
        const auto stem = path.stem().string().substr(9);
        nlohmann::json points = nlohmann::json::array();
        for (const auto& row : read_csv(path))
            if (row.size() == 7 && row[3] == "mean")
                points.push_back({{"step", KvConfig::to_int("step", row[0])},
                                  {"added", row[1]},
                                  {"G", KvConfig::to_double("G", row[4])},
                                  {"A_bar", KvConfig::to_double("A_bar", row[5])},
                                  {"A_tilde", KvConfig::to_double("A_tilde", row[6])}});
        summary["transfer"][stem] = points;
    }
    if (std::filesystem::exists(dir / "final.csv")) {
        found = true;
        for (const auto& row : read_csv(dir / "final.csv"))
            if (row.size() == 2 && row[0] != "metric") summary["final"][row[0]] = row[1];
    }
    require(found, ErrorKind::Data, "no experiment outputs in '" + o.in + "'");
    out << summary.dump() << '\n';
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// entry point

/// Parses argv, dispatches one subcommand and maps errors to exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Partial-discharge signal classification bench", "pdbench"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SynthOptions synth_o;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--config", synth_o.config, "Key-value synth config")->required();
    synth->add_option("--out", synth_o.out, "Output dataset file")->required();
    synth->add_option("--csv", synth_o.csv, "Also export as CSV");
    synth->add_option("--seed", synth_o.seed, "Override master_seed");
    synth->add_option("--jobs", synth_o.jobs, "Worker threads");

    NormalizeOptions norm_o;
    auto* normalize = app.add_subcommand("normalize", "Normalize a dataset into a features file");
    normalize->add_option("--in", norm_o.in, "Input dataset")->required();
    normalize->add_option("--out", norm_o.out, "Output features file")->required();
    normalize->add_option("--fit-on", norm_o.fit_on, "Dataset to fit statistics on (default: --in)");
    add_preprocess_options(normalize, norm_o.pre);
    normalize->add_option("--jobs", norm_o.jobs, "Worker threads");

    TrainOptions train_o;
    auto* train_cmd = app.add_subcommand("train", "Train one model on a per-class split");
    train_cmd->add_option("--data", train_o.data, "Dataset file")->required();
    train_cmd->add_option("--out", train_o.out, "Checkpoint file")->required();
    train_cmd->add_option("--metrics", train_o.metrics, "Test-split metrics CSV");
    train_cmd->add_option("--exclude", train_o.exclude, "Source class left out of training (repeatable)");
    add_preprocess_options(train_cmd, train_o.pre);
    train_cmd->add_option("--seed", train_o.seed, "Run seed (split, init, shuffle)");
    train_cmd->add_option("--epochs", train_o.epochs, "Epochs");
    train_cmd->add_option("--batch", train_o.batch, "Batch size");
    train_cmd->add_option("--lr", train_o.lr, "ADAM learning rate");
    train_cmd->add_option("--split", train_o.split, "Train fraction per class");
    train_cmd->add_option("--arch", train_o.arch, "Network width")->check(CLI::IsMember({"standard", "compact"}));
    train_cmd->add_option("--jobs", train_o.jobs, "Worker threads");

    EvaluateOptions eval_o;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on held-out measurements");
    evaluate_cmd->add_option("--data", eval_o.data, "Dataset file")->required();
    evaluate_cmd->add_option("--model", eval_o.model, "Checkpoint written by train")->required();
    evaluate_cmd->add_option("--holdout", eval_o.holdout, "Source class scored as the generalization set");
    evaluate_cmd->add_option("--out", eval_o.out, "Metrics CSV");
    evaluate_cmd->add_option("--report", eval_o.report, "Structured JSON report");
    evaluate_cmd->add_option("--jobs", eval_o.jobs, "Worker threads");

    ExperimentOptions exp_o;
    auto* experiment = app.add_subcommand("experiment", "Run the normalization grid and transfer curves");
    experiment->add_option("--plan", exp_o.plan, "Key-value plan file");
    experiment->add_option("--scale", exp_o.scale, "Data and training scale")
        ->check(CLI::IsMember({"desk", "paper"}));
    experiment->add_option("--data", exp_o.data, "Use this dataset instead of synthesizing one");
    experiment->add_option("--out", exp_o.out, "Output directory")->required();
    experiment->add_option("--seed", exp_o.seed, "Master seed");
    experiment->add_option("--jobs", exp_o.jobs, "Worker threads");

    ReportOptions report_o;
    auto* report = app.add_subcommand("report", "Summarize an experiment directory");
    report->add_option("--in", report_o.in, "Experiment output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        if (argc <= 1) err << app.help();
        print_error(err, "Usage", exit_code::usage, e.what());
        return exit_code::usage;
    }

    try {
        if (*synth) return cmd_synth(synth_o, out, err);
        if (*normalize) return cmd_normalize(norm_o, out, err);
        if (*train_cmd) return cmd_train(train_o, out, err);
        if (*evaluate_cmd) return cmd_evaluate(eval_o, out, err);
        if (*experiment) return cmd_experiment(exp_o, out, err);
        if (*report) return cmd_report(report_o, out, err);
    } catch (const Error& e) {
        const int code = exit_code_for(e.kind());
        print_error(err, to_string(e.kind()), code, e.what());
        return code;
    } catch (const std::filesystem::filesystem_error& e) {
        print_error(err, to_string(ErrorKind::Io), exit_code::data, e.what());
        return exit_code::data;
    } catch (const std::exception& e) {
        print_error(err, "Internal", exit_code::internal, e.what());
        return exit_code::internal;
    }
    print_error(err, "Usage", exit_code::usage, "no subcommand");
    return exit_code::usage;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"pdbench"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pdnet::cli
