#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "pdnet/dataset.hpp"
#include "pdnet/synth.hpp"
#include "pdnet/trainer.hpp"

namespace pdtest {

using Gen = std::mt19937_64;

inline std::vector<double> random_signal(Gen& g, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> x(n);
    for (auto& v : x) v = d(g);
    return x;
}

inline std::size_t uniform_index(Gen& g, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

inline double uniform(Gen& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }

/// Hand-built dataset: `counts[i]` measurements of table-I class i, random
/// samples, consecutive ids.
inline pdnet::Dataset random_dataset(Gen& g, const std::vector<std::size_t>& counts, std::size_t length) {
    pdnet::Dataset d;
    d.length = length;
    std::uint64_t id = 0;
    for (std::size_t c = 0; c < counts.size(); ++c)
        for (std::size_t k = 0; k < counts[c]; ++k)
            d.measurements.push_back({id++, pdnet::table1()[c].source, random_signal(g, length)});
    return d;
}

/// Synthetic data restricted to `classes`, `per_class` each.
inline pdnet::Dataset synth_classes(const std::vector<std::string>& classes, std::size_t per_class,
                                    std::size_t length, std::uint64_t seed = 3) {
    auto cfg = pdnet::desk_synth_config(per_class, seed, length);
    std::map<pdnet::SourceClass, std::size_t> counts;
    for (const auto& c : classes) counts[pdnet::SourceClass::parse(c)] = per_class;
    cfg.counts = counts;
    return pdnet::synth_dataset(cfg);
}

/// Counts matrix with entries in [0, max_count]; rows may be forced empty.
inline pdnet::ConfusionMatrix random_confusion(Gen& g, std::uint64_t max_count,
                                               std::array<bool, pdnet::kNumOutputClasses> present = {true, true,
                                                                                                     true, true}) {
    pdnet::ConfusionMatrix::Counts c{};
    for (std::size_t r = 0; r < pdnet::kNumOutputClasses; ++r) {
        if (!present[r]) continue;
        std::uint64_t sum = 0;
        for (auto& v : c[r]) sum += (v = std::uniform_int_distribution<std::uint64_t>(0, max_count)(g));
        if (sum == 0) c[r][uniform_index(g, 0, 3)] = 1;
    }
    return pdnet::ConfusionMatrix(c);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("pdnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace pdtest
