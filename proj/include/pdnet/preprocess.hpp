#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdnet/binary_io.hpp"
#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/fft.hpp"
#include "pdnet/parallel.hpp"

namespace pdnet {

enum class NormScheme : std::uint8_t { Trainset = 0, Class = 1, Measurement = 2 };
enum class Domain : std::uint8_t { Time = 0, Freq = 1 };

inline std::string to_string(NormScheme s) {
    switch (s) {
        case NormScheme::Trainset: return "trainset";
        case NormScheme::Class: return "class";
        case NormScheme::Measurement: return "measurement";
    }
    return "?";
}

inline std::string short_name(NormScheme s) {
    switch (s) {
        case NormScheme::Trainset: return "Tr";
        case NormScheme::Class: return "Cl";
        case NormScheme::Measurement: return "Me";
    }
    return "?";
}

inline NormScheme parse_scheme(const std::string& s) {
    if (s == "trainset" || s == "Tr") return NormScheme::Trainset;
    if (s == "class" || s == "Cl") return NormScheme::Class;
    if (s == "measurement" || s == "Me") return NormScheme::Measurement;
    fail(ErrorKind::Usage, "unknown normalization scheme '" + s + "'");
}

inline std::string to_string(Domain d) { return d == Domain::Time ? "time" : "fft"; }

inline Domain parse_domain(const std::string& s) {
    if (s == "time" || s == "TD") return Domain::Time;
    if (s == "fft" || s == "FFT" || s == "freq") return Domain::Freq;
    fail(ErrorKind::Usage, "unknown domain '" + s + "'");
}

struct MinMax {
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void add(std::span<const double> values) {
        for (double v : values) {
            min = std::min(min, v);
            max = std::max(max, v);
        }
    }
    void merge(const MinMax& o) {
        min = std::min(min, o.min);
        max = std::max(max, o.max);
    }
    friend bool operator==(const MinMax&, const MinMax&) = default;
};

struct NormStats {
    NormScheme scheme = NormScheme::Measurement;
    MinMax global;                           ///< Trainset
    std::map<SourceClass, MinMax> per_class;  ///< Class

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct FeatureVector {
    Domain domain = Domain::Time;
    std::vector<double> values;

    std::size_t length() const noexcept { return values.size(); }
};

struct FeatureRecord {
    std::uint64_t id = 0;
    SourceClass source;
    std::vector<double> values;

    friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

/// Model-ready inputs for one dataset (labels kept alongside values).
struct FeatureSet {
    Domain domain = Domain::Time;
    double sample_rate = 1e10;
    std::size_t length = 0;
    std::vector<FeatureRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }

    std::set<std::uint64_t> ids() const {
        std::set<std::uint64_t> out;
        for (const auto& r : records) out.insert(r.id);
        return out;
    }

    friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

namespace detail {

inline void check_range(const MinMax& mm, const std::string& scope) {
    require(mm.max > mm.min, ErrorKind::DegenerateRange, "degenerate min/max range in " + scope);
}

template <typename Items, typename Get>
NormStats fit_norm_items(const Items& items, NormScheme scheme, Get get) {
    require(!items.empty(), ErrorKind::Data, "cannot fit normalization on an empty train set");
    NormStats stats;
    stats.scheme = scheme;
    if (scheme == NormScheme::Trainset) {
        for (const auto& it : items) stats.global.add(get(it));
        check_range(stats.global, "train set");
    } else if (scheme == NormScheme::Class) {
        for (const auto& it : items) stats.per_class[it.source].add(get(it));
        for (const auto& [sc, mm] : stats.per_class) check_range(mm, "class " + sc.name());
    }
    return stats;
}

inline std::pair<double, double> scope_range(std::span<const double> values, const SourceClass& source,
                                             const NormStats& stats) {
    switch (stats.scheme) {
        case NormScheme::Trainset: return {stats.global.min, stats.global.max};
        case NormScheme::Class: {
            auto it = stats.per_class.find(source);
            require(it != stats.per_class.end(), ErrorKind::UnknownClass,
                    "no class normalization statistics for " + source.name());
            return {it->second.min, it->second.max};
        }
        case NormScheme::Measurement: {
            MinMax mm;
            mm.add(values);
            check_range(mm, "measurement");
            return {mm.min, mm.max};
        }
    }
    return {0.0, 1.0};
}

}  // namespace detail

/// Min/max over the scope each scheme needs. Measurement scaling is
/// per-record, so its stats carry no values.
inline NormStats fit_norm(const Dataset& train, NormScheme scheme) {
    return detail::fit_norm_items(train.measurements, scheme,
                                  [](const Measurement& m) { return std::span<const double>(m.samples); });
}

inline NormStats fit_norm(const FeatureSet& train, NormScheme scheme) {
    return detail::fit_norm_items(train.records, scheme,
                                  [](const FeatureRecord& r) { return std::span<const double>(r.values); });
}

/// Affine map of the chosen scope's [min, max] onto [-1, 1]. Values outside
/// the fitted range are not clipped.
inline std::vector<double> normalize_values(std::span<const double> values, const SourceClass& source,
                                            const NormStats& stats) {
    auto [lo, hi] = detail::scope_range(values, source, stats);
    const double width = hi - lo;
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = 2.0 * (values[i] - lo) / width - 1.0;
    return out;
}

inline FeatureVector apply_norm(const Measurement& m, const NormStats& stats) {
    return {Domain::Time, normalize_values(m.samples, m.source, stats)};
}

/// One-sided magnitude spectrum of a time-domain feature vector.
inline FeatureVector fft_features(const FeatureVector& f, std::size_t n_fft) {
    require(f.domain == Domain::Time, ErrorKind::Usage, "fft_features expects a time-domain vector");
    return {Domain::Freq, magnitude_spectrum(f.values, n_fft)};
}

struct PreprocessConfig {
    NormScheme scheme = NormScheme::Measurement;
    Domain domain = Domain::Time;
    std::size_t n_fft = 0;  ///< 0: next power of two >= l_s
    /// Freq domain only: normalize time signals, then take spectra. The
    /// default fits and applies normalization on the raw spectra.
    bool normalize_before_fft = false;

    std::size_t fft_size(std::size_t length) const { return n_fft ? n_fft : next_pow2(length); }

    std::size_t feature_length(std::size_t length) const {
        return domain == Domain::Time ? length : fft_size(length) / 2 + 1;
    }
};

/// Untransformed inputs: raw samples or raw magnitude spectra.
inline FeatureSet raw_features(const Dataset& d, Domain domain, std::size_t n_fft, std::size_t jobs = 1) {
    FeatureSet fs;
    fs.domain = domain;
    fs.sample_rate = d.sample_rate;
    fs.length = domain == Domain::Time ? d.length : n_fft / 2 + 1;
    fs.records.resize(d.size());
    parallel_for(d.size(), jobs, [&](std::size_t i) {
        const auto& m = d.measurements[i];
        fs.records[i] = {m.id, m.source, domain == Domain::Time ? m.samples : magnitude_spectrum(m.samples, n_fft)};
    });
    return fs;
}

inline FeatureSet apply_norm(const FeatureSet& raw, const NormStats& stats, std::size_t jobs = 1) {
    FeatureSet out = raw;
    parallel_for(raw.size(), jobs, [&](std::size_t i) {
        out.records[i].values = normalize_values(raw.records[i].values, raw.records[i].source, stats);
    });
    return out;
}

/// Adds class statistics for source classes that only occur in `extra`
/// (e.g. a holdout class never seen in training). Existing entries win.
inline void extend_class_stats(NormStats& stats, const FeatureSet& extra) {
    if (stats.scheme != NormScheme::Class || extra.empty()) return;
    auto fitted = fit_norm(extra, NormScheme::Class);
    for (const auto& [sc, mm] : fitted.per_class) stats.per_class.try_emplace(sc, mm);
}

/// Domain in which normalization statistics are fitted for `cfg`.
inline Domain stats_domain(const PreprocessConfig& cfg) {
    return cfg.domain == Domain::Freq && !cfg.normalize_before_fft ? Domain::Freq : Domain::Time;
}

/// Fits normalization statistics on training data only.
inline NormStats fit_preprocess(const Dataset& train, const PreprocessConfig& cfg, std::size_t jobs = 1) {
    return fit_norm(raw_features(train, stats_domain(cfg), cfg.fft_size(train.length), jobs), cfg.scheme);
}

/// Runs the full pipeline on `d` with previously fitted statistics.
inline FeatureSet transform(const Dataset& d, const PreprocessConfig& cfg, const NormStats& stats,
                            std::size_t jobs = 1) {
    const std::size_t n_fft = cfg.fft_size(d.length);
    auto normed = apply_norm(raw_features(d, stats_domain(cfg), n_fft, jobs), stats, jobs);
    if (cfg.domain == Domain::Time || !cfg.normalize_before_fft) return normed;
    FeatureSet spec{Domain::Freq, d.sample_rate, n_fft / 2 + 1, std::move(normed.records)};
    parallel_for(spec.size(), jobs, [&](std::size_t i) {
        spec.records[i].values = magnitude_spectrum(spec.records[i].values, n_fft);
    });
    return spec;
}

struct Prepared {
    NormStats stats;
    FeatureSet train;
    FeatureSet test;
};

/// Fits statistics on `train` only and transforms both sets.
inline Prepared prepare(const Dataset& train, const Dataset& test, const PreprocessConfig& cfg,
                        std::size_t jobs = 1) {
    Prepared out;
    out.stats = fit_preprocess(train, cfg, jobs);
    out.train = transform(train, cfg, out.stats, jobs);
    out.test = transform(test, cfg, out.stats, jobs);
    return out;
}

// Feature container: magic "PDFV", version u16 = 1, N u64, length u32,
// sample_rate f64, domain_tag u8 (0 time, 1 fft), then records laid out as
// in the dataset container (id, class fields, float32 values).
inline void write_features(std::ostream& out, const FeatureSet& fs) {
    bin::put_magic(out, "PDFV");
    bin::put_u16(out, 1);
    bin::put_u64(out, fs.records.size());
    bin::put_u32(out, static_cast<std::uint32_t>(fs.length));
    bin::put_f64(out, fs.sample_rate);
    bin::put_u8(out, static_cast<std::uint8_t>(fs.domain));
    for (const auto& r : fs.records) {
        require(r.values.size() == fs.length, ErrorKind::LengthMismatch, "feature length disagrees with header");
        detail::write_record_header(out, r.id, r.source);
        for (double v : r.values) bin::put_f32(out, static_cast<float>(v));
    }
}

inline FeatureSet read_features(std::istream& in) {
    bin::expect_magic(in, "PDFV");
    auto version = bin::get_u16(in);
    require(version == 1, ErrorKind::Data, "unsupported feature file version " + std::to_string(version));
    FeatureSet fs;
    auto n = bin::get_u64(in);
    fs.length = bin::get_u32(in);
    fs.sample_rate = bin::get_f64(in);
    auto tag = bin::get_u8(in);
    require(tag <= 1, ErrorKind::Data, "bad domain tag");
    fs.domain = static_cast<Domain>(tag);
    for (std::uint64_t i = 0; i < n; ++i) {
        FeatureRecord r;
        r.id = bin::get_u64(in);
        r.source = detail::read_record_class(in);
        r.values.resize(fs.length);
        for (auto& v : r.values) v = bin::get_f32(in);
        fs.records.push_back(std::move(r));
    }
    return fs;
}

inline void save_features(const FeatureSet& fs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
    write_features(out, fs);
}

inline FeatureSet load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    return read_features(in);
}

}  // namespace pdnet
