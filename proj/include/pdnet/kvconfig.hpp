#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pdnet/error.hpp"

namespace pdnet {

/// Flat `key = value` configuration. `#` starts a comment; blank lines are
/// ignored; later keys override earlier ones.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse(std::istream& in, const std::string& origin = "<config>") {
        KvConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                fail(ErrorKind::Usage, origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            if (key.empty())
                fail(ErrorKind::Usage, origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KvConfig parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KvConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) fail(ErrorKind::Usage, "missing config key '" + key + "'");
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    double get_double(const std::string& key, double fallback) const {
        return has(key) ? to_double(key, get(key)) : fallback;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return has(key) ? to_int(key, get(key)) : fallback;
    }

    /// Comma-separated list; empty items are dropped.
    std::vector<std::string> get_list(const std::string& key) const {
        return has(key) ? split_list(get(key)) : std::vector<std::string>{};
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    static std::vector<std::string> split_list(const std::string& text) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(text);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    static double to_double(const std::string& key, const std::string& text) {
        try {
            std::size_t pos = 0;
            double v = std::stod(text, &pos);
            if (pos != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            fail(ErrorKind::Usage, "config key '" + key + "': not a number: '" + text + "'");
        }
    }

    static std::int64_t to_int(const std::string& key, const std::string& text) {
        try {
            std::size_t pos = 0;
            long long v = std::stoll(text, &pos);
            if (pos != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            fail(ErrorKind::Usage, "config key '" + key + "': not an integer: '" + text + "'");
        }
    }

    static std::string trim(const std::string& s) {
        const char* ws = " \t\r\n";
        auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return {};
        auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace pdnet
