#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/kvconfig.hpp"
#include "pdnet/parallel.hpp"
#include "pdnet/rng.hpp"

namespace pdnet {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool valid() const noexcept { return lo <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct IntInterval {
    int lo = 0;
    int hi = 0;

    bool valid() const noexcept { return lo <= hi; }
    friend bool operator==(const IntInterval&, const IntInterval&) = default;
};

/// Statistics of the damped-sinusoid pulse train for one source class.
/// All draws are uniform over the given closed intervals.
struct ClassSignalParams {
    Interval carrier_freq{0.8e9, 1.2e9};  ///< Hz
    Interval damping_tau{3e-9, 5e-9};     ///< s; +inf gives undamped pulses
    IntInterval pulse_count{1, 3};
    double base_amplitude = 1.0;
    double amplitude_jitter = 0.2;    ///< relative, A *= 1 + jitter * U(-1, 1)
    double ui_amplitude_slope = 0.5;  ///< A *= 1 + slope * (ui - 1)
    double noise_sigma = 0.01;
    double harmonic = 0.0;  ///< relative amplitude of a second-harmonic component
    double dc_offset = 0.0;  ///< per-record baseline drawn from U(-dc_offset, dc_offset)
    Interval phase{0.0, 2.0 * std::numbers::pi};
    Interval pulse_time{0.05, 0.6};  ///< onset as a fraction of the record

    friend bool operator==(const ClassSignalParams&, const ClassSignalParams&) = default;
};

/// Record-level settings shared by every class.
struct SignalContext {
    std::size_t length = 2000;
    double sample_rate = 1e10;
    /// Per-measurement attenuation factor exp(-jitter * U(0, 1)).
    double path_loss_jitter = 0.0;
};

inline void validate_params(const ClassSignalParams& p, const SignalContext& ctx) {
    auto bad = [](const std::string& what) { fail(ErrorKind::InvalidParams, what); };
    if (!p.carrier_freq.valid() || !p.damping_tau.valid() || !p.pulse_count.valid() || !p.phase.valid() ||
        !p.pulse_time.valid())
        bad("empty parameter range");
    if (p.carrier_freq.lo <= 0.0) bad("carrier frequency must be positive");
    if (p.carrier_freq.hi >= ctx.sample_rate / 2.0) bad("carrier frequency at or above Nyquist");
    if (p.damping_tau.lo <= 0.0) bad("damping time constant must be positive");
    if (p.pulse_count.lo < 0) bad("negative pulse count");
    if (!(p.base_amplitude > 0.0)) bad("base amplitude must be positive");
    if (p.amplitude_jitter < 0.0 || p.amplitude_jitter >= 1.0) bad("amplitude jitter must be in [0, 1)");
    if (p.noise_sigma < 0.0) bad("noise sigma must be non-negative");
    if (p.harmonic < 0.0) bad("harmonic amplitude must be non-negative");
    if (p.dc_offset < 0.0) bad("dc offset must be non-negative");
    if (p.harmonic > 0.0 && 2.0 * p.carrier_freq.hi >= ctx.sample_rate / 2.0) bad("second harmonic at or above Nyquist");
    if (p.pulse_time.lo < 0.0 || p.pulse_time.hi > 1.0) bad("pulse time must be within [0, 1]");
    if (ctx.length == 0) bad("record length must be positive");
    if (!(ctx.sample_rate > 0.0)) bad("sample rate must be positive");
    if (ctx.path_loss_jitter < 0.0) bad("path loss jitter must be non-negative");
}

/// One synthetic record. Samples are rounded to float32 precision so the
/// measurement survives the on-disk format bit-exactly.
inline Measurement synth_measurement(const SourceClass& sc, const ClassSignalParams& p, const SignalContext& ctx,
                                     Rng& rng) {
    validate_params(p, ctx);
    // Always draws, so a degenerate interval (including +inf) keeps the stream aligned.
    auto uniform = [&rng](Interval r) {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return r.lo == r.hi ? r.lo : r.lo + (r.hi - r.lo) * u;
    };

    const double path_loss = std::exp(-ctx.path_loss_jitter * std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    const double baseline = p.dc_offset * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const double ui_gain = 1.0 + p.ui_amplitude_slope * (sc.ui.value() - 1.0);
    const int pulses = std::uniform_int_distribution<int>(p.pulse_count.lo, p.pulse_count.hi)(rng);

    std::vector<double> signal(ctx.length, baseline);
    const double dt = 1.0 / ctx.sample_rate;
    const auto last = static_cast<double>(ctx.length - 1);
    for (int k = 0; k < pulses; ++k) {
        const auto onset = static_cast<std::size_t>(std::llround(uniform(p.pulse_time) * last));
        const double freq = uniform(p.carrier_freq);
        const double tau = uniform(p.damping_tau);
        const double phi = uniform(p.phase);
        const double jitter = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        const double amp = p.base_amplitude * (1.0 + p.amplitude_jitter * jitter) * ui_gain * path_loss;
        const double omega = 2.0 * std::numbers::pi * freq;
        for (std::size_t u = onset; u < ctx.length; ++u) {
            const double t = static_cast<double>(u - onset) * dt;
            const double wave = std::sin(omega * t + phi) + p.harmonic * std::sin(2.0 * (omega * t + phi));
            signal[u] += amp * std::exp(-t / tau) * wave;
        }
    }
    if (p.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, p.noise_sigma);
        for (auto& s : signal) s += noise(rng);
    }
    for (auto& s : signal) s = static_cast<double>(static_cast<float>(s));
    return Measurement{0, sc, std::move(signal)};
}

struct SynthConfig {
    std::map<SourceClass, ClassSignalParams> params;
    std::map<SourceClass, std::size_t> counts;
    SignalContext signal;
    std::uint64_t master_seed = 1;

    void validate() const {
        require(!counts.empty(), ErrorKind::InvalidParams, "no classes configured");
        for (const auto& [sc, n] : counts) {
            validate_source(sc);
            require(n > 0, ErrorKind::InvalidParams, "count for " + sc.name() + " must be positive");
            auto it = params.find(sc);
            require(it != params.end(), ErrorKind::InvalidParams, "no signal parameters for " + sc.name());
            validate_params(it->second, signal);
        }
    }

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [sc, c] : counts) n += c;
        return n;
    }
};

/// Built-in statistics. Defect type sets the carrier band (Pa near 1 GHz,
/// Pr near 1.75 GHz); polarity sets damping and pulse count. Above the
/// class's first U_i, Pa+ carriers saturate towards the Pr band and the
/// pulses gain a second harmonic of relative amplitude 0.4. Every record
/// sits on a random baseline of up to 0.2.
inline ClassSignalParams default_class_params(const SourceClass& sc) {
    ClassSignalParams p;
    const bool particle = sc.defect == DefectType::Particle;
    const bool negative = sc.polarity == Polarity::Negative;
    // Reference U_i multiple where each output class is first observed.
    const double ui_ref = particle ? 1.0 : 2.0;
    const double excess = negative ? 0.0 : std::max(0.0, (sc.ui.value() - ui_ref) / ui_ref);
    const bool shifted = particle && excess > 0.0;
    const double drift = shifted ? 1.0 + 0.75 * (1.0 - std::exp(-excess / 0.15)) : 1.0;
    p.carrier_freq = particle ? Interval{0.8e9 * drift, 1.2e9 * drift} : Interval{1.5e9, 2.0e9};
    p.harmonic = shifted ? 0.4 : 0.0;
    p.damping_tau = negative ? Interval{2e-9, 4e-9} : Interval{10e-9, 16e-9};
    p.pulse_count = negative ? IntInterval{3, 4} : IntInterval{1, 2};
    p.base_amplitude = particle ? 1.0 : 0.8;
    p.amplitude_jitter = 0.2;
    p.ui_amplitude_slope = 0.5;
    p.noise_sigma = 0.001;
    p.dc_offset = 0.2;
    return p;
}

/// Table I class layout at full record length.
inline SynthConfig paper_synth_config(std::uint64_t seed = 1) {
    SynthConfig cfg;
    cfg.signal = {20002, 1e10, 3.0};
    cfg.master_seed = seed;
    for (const auto& cell : table1()) {
        cfg.counts[cell.source] = cell.count;
        cfg.params[cell.source] = default_class_params(cell.source);
    }
    return cfg;
}

/// Short records and reduced counts for desk-scale runs.
inline SynthConfig desk_synth_config(std::size_t per_class, std::uint64_t seed = 1, std::size_t length = 2000) {
    SynthConfig cfg;
    cfg.signal = {length, 1e10, 3.0};
    cfg.master_seed = seed;
    for (const auto& cell : table1()) {
        cfg.counts[cell.source] = per_class;
        cfg.params[cell.source] = default_class_params(cell.source);
    }
    return cfg;
}

namespace detail {

inline Interval parse_interval(const std::string& key, const std::string& text) {
    auto items = KvConfig::split_list(text);
    require(items.size() == 2, ErrorKind::Usage, "config key '" + key + "' expects 'lo, hi'");
    return {KvConfig::to_double(key, items[0]), KvConfig::to_double(key, items[1])};
}

inline void apply_class_key(ClassSignalParams& p, const std::string& field, const std::string& key,
                            const std::string& value) {
    if (field == "carrier_freq")
        p.carrier_freq = parse_interval(key, value);
    else if (field == "damping_tau")
        p.damping_tau = parse_interval(key, value);
    else if (field == "pulse_count") {
        auto r = parse_interval(key, value);
        p.pulse_count = {static_cast<int>(r.lo), static_cast<int>(r.hi)};
    } else if (field == "phase")
        p.phase = parse_interval(key, value);
    else if (field == "pulse_time")
        p.pulse_time = parse_interval(key, value);
    else if (field == "base_amplitude")
        p.base_amplitude = KvConfig::to_double(key, value);
    else if (field == "amplitude_jitter")
        p.amplitude_jitter = KvConfig::to_double(key, value);
    else if (field == "ui_amplitude_slope")
        p.ui_amplitude_slope = KvConfig::to_double(key, value);
    else if (field == "noise_sigma")
        p.noise_sigma = KvConfig::to_double(key, value);
    else if (field == "harmonic")
        p.harmonic = KvConfig::to_double(key, value);
    else if (field == "dc_offset")
        p.dc_offset = KvConfig::to_double(key, value);
    else
        fail(ErrorKind::Usage, "unknown class parameter '" + key + "'");
}

}  // namespace detail

/// Applies override keys to `cfg`:
///
///   l_s, sample_rate, master_seed, path_loss_jitter
///   classes = Pa-1, Pa+1, ...    (subset of the populated cells)
///   count = N                    (every class) / count.Pa-1 = N
///   Pa-1.carrier_freq = lo, hi   (any ClassSignalParams field; `*.` = all)
inline void apply_synth_overrides(SynthConfig& cfg, const KvConfig& kv) {
    cfg.signal.length = static_cast<std::size_t>(kv.get_int("l_s", static_cast<std::int64_t>(cfg.signal.length)));
    cfg.signal.sample_rate = kv.get_double("sample_rate", cfg.signal.sample_rate);
    cfg.signal.path_loss_jitter = kv.get_double("path_loss_jitter", cfg.signal.path_loss_jitter);
    cfg.master_seed = static_cast<std::uint64_t>(kv.get_int("master_seed", static_cast<std::int64_t>(cfg.master_seed)));

    if (kv.has("classes")) {
        std::map<SourceClass, std::size_t> kept;
        for (const auto& name : kv.get_list("classes")) {
            auto sc = SourceClass::parse(name);
            validate_source(sc);
            kept[sc] = cfg.counts.count(sc) ? cfg.counts.at(sc) : 1;
        }
        cfg.counts = std::move(kept);
    }
    if (kv.has("count")) {
        auto n = kv.get_int("count", 0);
        require(n > 0, ErrorKind::Usage, "count must be positive");
        for (auto& [sc, c] : cfg.counts) c = static_cast<std::size_t>(n);
    }
    for (const auto& [key, value] : kv.entries()) {
        if (key.rfind("count.", 0) == 0) {
            auto sc = SourceClass::parse(key.substr(6));
            validate_source(sc);
            auto n = KvConfig::to_int(key, value);
            require(n > 0, ErrorKind::Usage, "config key '" + key + "' must be positive");
            cfg.counts[sc] = static_cast<std::size_t>(n);
        }
    }
    for (const auto& [key, value] : kv.entries()) {
        auto dot = key.rfind('.');
        if (key.rfind("count.", 0) == 0 || dot == std::string::npos) continue;
        auto target = key.substr(0, dot);
        auto field = key.substr(dot + 1);
        if (target == "*") {
            for (auto& [sc, p] : cfg.params) detail::apply_class_key(p, field, key, value);
        } else {
            auto sc = SourceClass::parse(target);
            validate_source(sc);
            auto [it, inserted] = cfg.params.try_emplace(sc, default_class_params(sc));
            detail::apply_class_key(it->second, field, key, value);
        }
    }
    cfg.validate();
}

/// Reads a SynthConfig from flat key-value text. `preset = paper | desk`
/// picks the starting point (desk: l_s 2000, `count` per class); every other
/// key is an override.
inline SynthConfig parse_synth_config(const KvConfig& kv) {
    const auto preset = kv.get_or("preset", "paper");
    SynthConfig cfg;
    if (preset == "paper")
        cfg = paper_synth_config();
    else if (preset == "desk")
        cfg = desk_synth_config(static_cast<std::size_t>(kv.get_int("count", 400)));
    else
        fail(ErrorKind::Usage, "unknown preset '" + preset + "'");
    apply_synth_overrides(cfg, kv);
    return cfg;
}

/// Generates every configured measurement. Ids are consecutive in
/// (class order, index within class); measurement i draws from the stream
/// derived from (master_seed, i), so any worker count gives the same data.
inline Dataset synth_dataset(const SynthConfig& cfg, std::size_t jobs = 1) {
    cfg.validate();
    struct Slot {
        SourceClass sc;
        const ClassSignalParams* params;
    };
    std::vector<Slot> slots;
    slots.reserve(cfg.total());
    for (const auto& [sc, n] : cfg.counts) {
        const auto* p = &cfg.params.at(sc);
        for (std::size_t i = 0; i < n; ++i) slots.push_back({sc, p});
    }

    Dataset d{cfg.signal.sample_rate, cfg.signal.length, {}};
    d.measurements.resize(slots.size());
    parallel_for(slots.size(), jobs, [&](std::size_t i) {
        auto rng = make_stream(cfg.master_seed, streams::synth, i);
        d.measurements[i] = synth_measurement(slots[i].sc, *slots[i].params, cfg.signal, rng);
        d.measurements[i].id = i;
    });
    return d;
}

}  // namespace pdnet
