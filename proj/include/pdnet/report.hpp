#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/trainer.hpp"

namespace pdnet {

/// FNV-1a 64-bit; used for config hashes and input-file digests.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_digest(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
    out << content;
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

namespace svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

/// White-to-blue cell shade for a rate in [0, 1].
inline std::string shade(double rate) {
    const int v = static_cast<int>(255.0 - 200.0 * std::clamp(rate, 0.0, 1.0));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02xff", v, v);
    return buf;
}

}  // namespace svg

/// 4x4 heatmap of row-normalized rates with an optional G annotation.
inline std::string confusion_svg(const ConfusionMatrix::Rates& rates, const std::array<bool, kNumOutputClasses>& present,
                                 const std::string& title, std::optional<double> g = std::nullopt) {
    const double cell = 70, left = 80, top = 60;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg::num(left + 4 * cell + 30) << "\" height=\""
      << svg::num(top + 4 * cell + 70) << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    s << "<text x=\"" << svg::num(left) << "\" y=\"22\" font-size=\"15\">" << svg::escape(title) << "</text>\n";
    s << "<text x=\"" << svg::num(left + 2 * cell) << "\" y=\"44\" text-anchor=\"middle\">predicted</text>\n";
    for (std::size_t k = 0; k < kNumOutputClasses; ++k) {
        const auto name = output_class_name(static_cast<OutputClass>(k));
        s << "<text x=\"" << svg::num(left + (static_cast<double>(k) + 0.5) * cell) << "\" y=\"" << svg::num(top - 4)
          << "\" text-anchor=\"middle\">" << svg::escape(name) << "</text>\n";
        s << "<text x=\"" << svg::num(left - 8) << "\" y=\"" << svg::num(top + (static_cast<double>(k) + 0.55) * cell)
          << "\" text-anchor=\"end\">" << svg::escape(name) << "</text>\n";
    }
    for (std::size_t r = 0; r < kNumOutputClasses; ++r) {
        for (std::size_t c = 0; c < kNumOutputClasses; ++c) {
            const double x = left + static_cast<double>(c) * cell, y = top + static_cast<double>(r) * cell;
            const double v = present[r] ? rates[r][c] : 0.0;
            s << "<rect x=\"" << svg::num(x) << "\" y=\"" << svg::num(y) << "\" width=\"" << svg::num(cell)
              << "\" height=\"" << svg::num(cell) << "\" fill=\"" << svg::shade(v) << "\" stroke=\"#444\"/>\n";
            s << "<text x=\"" << svg::num(x + cell / 2) << "\" y=\"" << svg::num(y + cell / 2 + 5)
              << "\" text-anchor=\"middle\">" << (present[r] ? fmt_rate(v).substr(0, 6) : std::string("-"))
              << "</text>\n";
        }
    }
    if (g) {
        s << "<text x=\"" << svg::num(left) << "\" y=\"" << svg::num(top + 4 * cell + 30)
          << "\" fill=\"#c00\">G = " << fmt_rate(*g) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

struct Series {
    std::string label;
    std::vector<std::string> x_labels;
    std::vector<double> values;
};

/// Line chart of rates in [0, 1] over curve steps, one polyline per series.
inline std::string curve_svg(const std::vector<Series>& series, const std::string& title) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
    std::size_t steps = 0;
    for (const auto& sr : series) steps = std::max(steps, sr.values.size());
    const double left = 60, top = 40, width = 520, height = 300;
    const double dx = steps > 1 ? width / static_cast<double>(steps - 1) : 0.0;
    auto px = [&](std::size_t i) { return left + static_cast<double>(i) * dx; };
    auto py = [&](double v) { return top + height * (1.0 - std::clamp(v, 0.0, 1.0)); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg::num(left + width + 200) << "\" height=\""
      << svg::num(top + height + 70) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<text x=\"" << svg::num(left) << "\" y=\"22\" font-size=\"15\">" << svg::escape(title) << "</text>\n";
    s << "<rect x=\"" << svg::num(left) << "\" y=\"" << svg::num(top) << "\" width=\"" << svg::num(width)
      << "\" height=\"" << svg::num(height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = t / 4.0;
        s << "<line x1=\"" << svg::num(left) << "\" x2=\"" << svg::num(left + width) << "\" y1=\"" << svg::num(py(v))
          << "\" y2=\"" << svg::num(py(v)) << "\" stroke=\"#ddd\"/>\n";
        s << "<text x=\"" << svg::num(left - 6) << "\" y=\"" << svg::num(py(v) + 4) << "\" text-anchor=\"end\">"
          << svg::num(v) << "</text>\n";
    }
    if (!series.empty()) {
        const auto& xl = series.front().x_labels;
        for (std::size_t i = 0; i < xl.size(); ++i)
            s << "<text x=\"" << svg::num(px(i)) << "\" y=\"" << svg::num(top + height + 18)
              << "\" text-anchor=\"middle\">" << svg::escape(xl[i]) << "</text>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = colors[k % std::size(colors)];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[k].values.size(); ++i)
            s << (i ? " " : "") << svg::num(px(i)) << ',' << svg::num(py(series[k].values[i]));
        s << "\"/>\n";
        for (std::size_t i = 0; i < series[k].values.size(); ++i)
            s << "<circle cx=\"" << svg::num(px(i)) << "\" cy=\"" << svg::num(py(series[k].values[i]))
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        const double ly = top + 14.0 + 18.0 * static_cast<double>(k);
        s << "<line x1=\"" << svg::num(left + width + 15) << "\" x2=\"" << svg::num(left + width + 35) << "\" y1=\""
          << svg::num(ly - 4) << "\" y2=\"" << svg::num(ly - 4) << "\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << svg::num(left + width + 40) << "\" y=\"" << svg::num(ly) << "\">"
          << svg::escape(series[k].label) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace pdnet
