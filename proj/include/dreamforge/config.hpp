#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "dreamforge/io.hpp"
#include "dreamforge/tensor.hpp"

namespace dreamforge {

/// Flat `key = value` config with `#` comments. One format for every
/// subcommand; unknown keys are rejected at lookup, not at parse.
class Config {
public:
    static Config parse(const std::string& text) {
        Config cfg;
        cfg.hash_ = hex(sha256(text));
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const size_t hashpos = line.find('#');
            if (hashpos != std::string::npos) line.erase(hashpos);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw Error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_f64(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("config: key '" + key + "' is not a number: " + it->second);
        }
    }

    std::int64_t get_i64(const std::string& key, std::int64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            const std::int64_t v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("config: key '" + key + "' is not an integer: " + it->second);
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            const std::uint64_t v = std::stoull(it->second, &used);
            if (used != it->second.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("config: key '" + key + "' is not an unsigned integer: " + it->second);
        }
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// SHA-256 of the raw config text; used in provenance lines.
    const std::string& hash() const { return hash_; }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
    std::string hash_;
};

}  // namespace dreamforge
