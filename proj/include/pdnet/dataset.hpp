#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "pdnet/binary_io.hpp"
#include "pdnet/error.hpp"
#include "pdnet/rng.hpp"

namespace pdnet {

enum class DefectType : std::uint8_t { Particle = 0, Protrusion = 1 };
enum class Polarity : std::uint8_t { Negative = 0, Positive = 1 };

/// Multiple of the inception voltage, kept as an exact reduced fraction so
/// that 1.25 round-trips as 5/4 through every file format.
class UiMultiple {
public:
    constexpr UiMultiple() = default;

    UiMultiple(std::uint16_t num, std::uint16_t den) : num_(num), den_(den) {
        require(num > 0 && den > 0, ErrorKind::InvalidParams, "U_i multiple must be a positive fraction");
        auto g = std::gcd(num_, den_);
        num_ = static_cast<std::uint16_t>(num_ / g);
        den_ = static_cast<std::uint16_t>(den_ / g);
    }

    /// Parses decimal text such as "1", "1.25" or "3/2".
    static UiMultiple parse(const std::string& text) {
        if (auto slash = text.find('/'); slash != std::string::npos) {
            auto n = std::stoul(text.substr(0, slash));
            auto d = std::stoul(text.substr(slash + 1));
            require(n <= 0xffff && d <= 0xffff, ErrorKind::Usage, "U_i fraction out of range: " + text);
            return UiMultiple(static_cast<std::uint16_t>(n), static_cast<std::uint16_t>(d));
        }
        std::uint32_t num = 0, den = 1;
        bool seen_dot = false, any = false;
        for (char c : text) {
            if (c == '.' && !seen_dot) {
                seen_dot = true;
            } else if (c >= '0' && c <= '9') {
                num = num * 10 + static_cast<std::uint32_t>(c - '0');
                if (seen_dot) den *= 10;
                any = true;
                require(num <= 0xffffff && den <= 10000, ErrorKind::Usage, "U_i multiple too precise: " + text);
            } else {
                fail(ErrorKind::Usage, "bad U_i multiple '" + text + "'");
            }
        }
        require(any && num > 0, ErrorKind::Usage, "bad U_i multiple '" + text + "'");
        auto g = std::gcd(num, den);
        num /= g;
        den /= g;
        require(num <= 0xffff && den <= 0xffff, ErrorKind::Usage, "U_i multiple out of range: " + text);
        return UiMultiple(static_cast<std::uint16_t>(num), static_cast<std::uint16_t>(den));
    }

    std::uint16_t numerator() const noexcept { return num_; }
    std::uint16_t denominator() const noexcept { return den_; }
    double value() const noexcept { return static_cast<double>(num_) / den_; }

    std::string to_string() const {
        // Shortest decimal that parses back to the same fraction.
        for (int digits = 0; digits <= 6; ++digits) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.*f", digits, value());
            if (parse_exact(buf)) return buf;
        }
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    friend bool operator==(const UiMultiple&, const UiMultiple&) = default;
    friend auto operator<=>(const UiMultiple& a, const UiMultiple& b) {
        return static_cast<std::uint32_t>(a.num_) * b.den_ <=> static_cast<std::uint32_t>(b.num_) * a.den_;
    }

private:
    bool parse_exact(const char* text) const {
        try {
            return parse(text) == *this;
        } catch (const Error&) {
            return false;
        }
    }

    std::uint16_t num_ = 1;
    std::uint16_t den_ = 1;
};

struct SourceClass {
    DefectType defect = DefectType::Particle;
    Polarity polarity = Polarity::Negative;
    UiMultiple ui;

    friend bool operator==(const SourceClass&, const SourceClass&) = default;
    friend std::strong_ordering operator<=>(const SourceClass& a, const SourceClass& b) {
        if (auto c = a.defect <=> b.defect; c != 0) return c;
        if (auto c = a.polarity <=> b.polarity; c != 0) return c;
        if (auto c = a.ui.numerator() * b.ui.denominator() <=> b.ui.numerator() * a.ui.denominator(); c != 0)
            return c;
        return a.ui.denominator() <=> b.ui.denominator();
    }

    /// "Pa-1.5", "Pr+2", ...
    std::string name() const {
        std::string s = defect == DefectType::Particle ? "Pa" : "Pr";
        s += polarity == Polarity::Negative ? '-' : '+';
        return s + ui.to_string();
    }

    static SourceClass parse(const std::string& text) {
        require(text.size() >= 4, ErrorKind::Usage, "bad source class '" + text + "'");
        SourceClass sc;
        auto prefix = text.substr(0, 2);
        if (prefix == "Pa")
            sc.defect = DefectType::Particle;
        else if (prefix == "Pr")
            sc.defect = DefectType::Protrusion;
        else
            fail(ErrorKind::Usage, "bad defect in source class '" + text + "'");
        if (text[2] == '-')
            sc.polarity = Polarity::Negative;
        else if (text[2] == '+')
            sc.polarity = Polarity::Positive;
        else
            fail(ErrorKind::Usage, "bad polarity in source class '" + text + "'");
        sc.ui = UiMultiple::parse(text.substr(3));
        return sc;
    }

    /// Stable 64-bit key, independent of which other classes exist.
    std::uint64_t key() const noexcept {
        return (static_cast<std::uint64_t>(defect) << 40) | (static_cast<std::uint64_t>(polarity) << 32) |
               (static_cast<std::uint64_t>(ui.numerator()) << 16) | ui.denominator();
    }
};

struct Table1Cell {
    SourceClass source;
    std::size_t count;
};

/// The nine populated source classes and their measurement counts.
inline const std::array<Table1Cell, 9>& table1() {
    using D = DefectType;
    using P = Polarity;
    static const std::array<Table1Cell, 9> cells{{
        {{D::Particle, P::Negative, UiMultiple(1, 1)}, 3500},
        {{D::Particle, P::Negative, UiMultiple(3, 2)}, 3500},
        {{D::Particle, P::Negative, UiMultiple(3, 1)}, 3500},
        {{D::Particle, P::Positive, UiMultiple(1, 1)}, 3500},
        {{D::Particle, P::Positive, UiMultiple(5, 4)}, 3500},
        {{D::Particle, P::Positive, UiMultiple(3, 2)}, 3500},
        {{D::Protrusion, P::Negative, UiMultiple(2, 1)}, 4000},
        {{D::Protrusion, P::Negative, UiMultiple(3, 1)}, 4000},
        {{D::Protrusion, P::Positive, UiMultiple(2, 1)}, 4000},
    }};
    return cells;
}

inline bool is_table1(const SourceClass& sc) {
    const auto& cells = table1();
    return std::any_of(cells.begin(), cells.end(), [&](const Table1Cell& c) { return c.source == sc; });
}

inline void validate_source(const SourceClass& sc) {
    require(is_table1(sc), ErrorKind::InvalidParams, "source class " + sc.name() + " is not a populated cell");
}

enum class OutputClass : std::uint8_t { PaNeg = 0, PaPos = 1, PrNeg = 2, PrPos = 3 };
inline constexpr std::size_t kNumOutputClasses = 4;

constexpr OutputClass from_source(DefectType d, Polarity p) noexcept {
    return static_cast<OutputClass>(static_cast<int>(d) * 2 + static_cast<int>(p));
}

constexpr OutputClass from_source(const SourceClass& sc) noexcept { return from_source(sc.defect, sc.polarity); }

constexpr std::size_t index_of(OutputClass c) noexcept { return static_cast<std::size_t>(c); }

inline std::string output_class_name(OutputClass c) {
    static constexpr const char* names[] = {"Pa-", "Pa+", "Pr-", "Pr+"};
    return names[index_of(c)];
}

struct Measurement {
    std::uint64_t id = 0;
    SourceClass source;
    std::vector<double> samples;

    friend bool operator==(const Measurement&, const Measurement&) = default;
};

struct Dataset {
    double sample_rate = 1e10;
    std::size_t length = 0;
    std::vector<Measurement> measurements;

    std::size_t size() const noexcept { return measurements.size(); }
    bool empty() const noexcept { return measurements.empty(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;

    std::map<SourceClass, std::size_t> class_counts() const {
        std::map<SourceClass, std::size_t> counts;
        for (const auto& m : measurements) ++counts[m.source];
        return counts;
    }

    std::set<std::uint64_t> ids() const {
        std::set<std::uint64_t> out;
        for (const auto& m : measurements) out.insert(m.id);
        return out;
    }

    /// Measurements whose source class is in `classes`, original order kept.
    Dataset subset(const std::vector<SourceClass>& classes) const {
        Dataset out{sample_rate, length, {}};
        for (const auto& m : measurements) {
            if (std::find(classes.begin(), classes.end(), m.source) != classes.end()) out.measurements.push_back(m);
        }
        return out;
    }

    void validate() const {
        std::set<std::uint64_t> seen;
        for (const auto& m : measurements) {
            require(m.samples.size() == length, ErrorKind::LengthMismatch,
                    "measurement " + std::to_string(m.id) + " has " + std::to_string(m.samples.size()) +
                        " samples, expected " + std::to_string(length));
            require(seen.insert(m.id).second, ErrorKind::Data, "duplicate measurement id " + std::to_string(m.id));
            for (double s : m.samples)
                require(std::isfinite(s), ErrorKind::Data, "non-finite sample in measurement " + std::to_string(m.id));
        }
    }
};

struct Split {
    Dataset train;
    Dataset test;
};

/// Number of training items drawn from a class of `n` measurements.
inline std::size_t train_count(std::size_t n, double fraction) {
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n - 1);
}

/// Per-source-class randomized partition. Each class draws from its own
/// stream keyed by (seed, class), so a class's partition does not change
/// when other classes are added to or removed from the dataset.
inline Split stratified_split(const Dataset& d, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, ErrorKind::Usage, "split fraction must be in (0, 1)");
    std::map<SourceClass, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < d.measurements.size(); ++i) by_class[d.measurements[i].source].push_back(i);

    std::vector<char> in_train(d.measurements.size(), 0);
    for (auto& [sc, idx] : by_class) {
        require(idx.size() >= 2, ErrorKind::EmptyClass,
                "source class " + sc.name() + " has fewer than 2 measurements");
        auto rng = make_stream(seed, streams::split, sc.key());
        std::shuffle(idx.begin(), idx.end(), rng);
        auto k = train_count(idx.size(), fraction);
        for (std::size_t j = 0; j < k; ++j) in_train[idx[j]] = 1;
    }

    Split split{{d.sample_rate, d.length, {}}, {d.sample_rate, d.length, {}}};
    for (std::size_t i = 0; i < d.measurements.size(); ++i)
        (in_train[i] ? split.train : split.test).measurements.push_back(d.measurements[i]);
    return split;
}

// Binary container: magic "PDDS", version u16 = 1, N u64, l_s u32,
// sample_rate f64, then per measurement id u64, defect u8, polarity u8,
// ui numerator u16, ui denominator u16, l_s float32 samples.
inline constexpr std::uint16_t kDatasetVersion = 1;

namespace detail {

inline void write_record_header(std::ostream& out, std::uint64_t id, const SourceClass& sc) {
    bin::put_u64(out, id);
    bin::put_u8(out, static_cast<std::uint8_t>(sc.defect));
    bin::put_u8(out, static_cast<std::uint8_t>(sc.polarity));
    bin::put_u16(out, sc.ui.numerator());
    bin::put_u16(out, sc.ui.denominator());
}

inline SourceClass read_record_class(std::istream& in) {
    auto defect = bin::get_u8(in);
    auto polarity = bin::get_u8(in);
    auto num = bin::get_u16(in);
    auto den = bin::get_u16(in);
    require(defect <= 1 && polarity <= 1, ErrorKind::Data, "bad class byte in record");
    require(num > 0 && den > 0, ErrorKind::Data, "bad U_i fraction in record");
    return {static_cast<DefectType>(defect), static_cast<Polarity>(polarity), UiMultiple(num, den)};
}

}  // namespace detail

inline void write_dataset(std::ostream& out, const Dataset& d) {
    bin::put_magic(out, "PDDS");
    bin::put_u16(out, kDatasetVersion);
    bin::put_u64(out, d.measurements.size());
    bin::put_u32(out, static_cast<std::uint32_t>(d.length));
    bin::put_f64(out, d.sample_rate);
    for (const auto& m : d.measurements) {
        require(m.samples.size() == d.length, ErrorKind::LengthMismatch,
                "measurement " + std::to_string(m.id) + " length disagrees with header");
        detail::write_record_header(out, m.id, m.source);
        for (double s : m.samples) bin::put_f32(out, static_cast<float>(s));
    }
}

inline Dataset read_dataset(std::istream& in) {
    bin::expect_magic(in, "PDDS");
    auto version = bin::get_u16(in);
    require(version == kDatasetVersion, ErrorKind::Data, "unsupported dataset version " + std::to_string(version));
    Dataset d;
    auto n = bin::get_u64(in);
    d.length = bin::get_u32(in);
    d.sample_rate = bin::get_f64(in);
    d.measurements.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
    for (std::uint64_t i = 0; i < n; ++i) {
        Measurement m;
        m.id = bin::get_u64(in);
        m.source = detail::read_record_class(in);
        m.samples.resize(d.length);
        try {
            for (auto& s : m.samples) s = bin::get_f32(in);
        } catch (const Error&) {
            fail(ErrorKind::LengthMismatch,
                 "measurement " + std::to_string(m.id) + " has fewer samples than the header's l_s");
        }
        d.measurements.push_back(std::move(m));
    }
    if (in.peek() != std::char_traits<char>::eof())
        fail(ErrorKind::LengthMismatch, "trailing bytes after last measurement");
    d.validate();
    return d;
}

inline void save(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
    write_dataset(out, d);
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

inline Dataset load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    return read_dataset(in);
}

/// Debug export: one row per measurement.
inline void write_csv(std::ostream& out, const Dataset& d) {
    out << "id,defect,polarity,ui";
    for (std::size_t i = 0; i < d.length; ++i) out << ",s" << i;
    out << '\n';
    char buf[32];
    for (const auto& m : d.measurements) {
        out << m.id << ',' << (m.source.defect == DefectType::Particle ? "Pa" : "Pr") << ','
            << (m.source.polarity == Polarity::Negative ? "neg" : "pos") << ',' << m.source.ui.to_string();
        for (double s : m.samples) {
            std::snprintf(buf, sizeof buf, "%.9g", s);
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace pdnet
