#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include "weimix/errors.hpp"

namespace weimix {

/// Everything a training run depends on. File values are overridden by
/// command-line flags; the effective result is echoed into report headers.
struct TrainConfig {
    std::size_t p = 1;
    double learning_rate = 1e-4;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 500;
    std::size_t patience = 20;
    double offset_epsilon = 1e-4;
    std::string censoring_mode = "global";  // "global" or "per-observation"
    double censoring_threshold = 0.0;       // 0 means: derive from the data (max time)
    std::size_t k_folds = 5;
    double val_fraction = 0.2;
    std::uint64_t seed = 42;
    std::string schema;  // path to the dataset schema file

    void validate() const {
        if (p < 1) throw ConfigError("config: p must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("config: learning_rate must be > 0");
        if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
        if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
        if (patience < 1) throw ConfigError("config: patience must be >= 1");
        if (!(offset_epsilon > 0.0)) throw ConfigError("config: offset_epsilon must be > 0");
        if (censoring_mode != "global" && censoring_mode != "per-observation")
            throw ConfigError("config: censoring_mode must be 'global' or 'per-observation'");
        if (censoring_threshold < 0.0 || !std::isfinite(censoring_threshold))
            throw ConfigError("config: censoring_threshold must be >= 0");
        if (k_folds < 2) throw ConfigError("config: k_folds must be >= 2");
        if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
            throw ConfigError("config: val_fraction must lie in (0, 1)");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::size_t parse_count(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

inline double parse_real(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline std::string format_real(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace detail

/// Assign one key=value pair. Shared by the file parser and flag overrides so
/// both spellings behave identically.
inline void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "p") cfg.p = detail::parse_count(value, key);
    else if (key == "learning_rate") cfg.learning_rate = detail::parse_real(value, key);
    else if (key == "batch_size") cfg.batch_size = detail::parse_count(value, key);
    else if (key == "max_epochs") cfg.max_epochs = detail::parse_count(value, key);
    else if (key == "patience") cfg.patience = detail::parse_count(value, key);
    else if (key == "offset_epsilon") cfg.offset_epsilon = detail::parse_real(value, key);
    else if (key == "censoring_mode") cfg.censoring_mode = value;
    else if (key == "censoring_threshold") cfg.censoring_threshold = detail::parse_real(value, key);
    else if (key == "k_folds") cfg.k_folds = detail::parse_count(value, key);
    else if (key == "val_fraction") cfg.val_fraction = detail::parse_real(value, key);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_count(value, key));
    else if (key == "schema") cfg.schema = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

/// Flat key=value file; '#' starts a comment, blank lines ignored.
inline TrainConfig load_config_file(const std::string& path, TrainConfig base = TrainConfig{}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " of '" + path + "' is not key=value");
        apply_config_kv(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return base;
}

/// The effective configuration as '#'-prefixed header lines, fixed key order.
inline std::string effective_config_lines(const TrainConfig& cfg) {
    std::string s;
    s += "# p=" + std::to_string(cfg.p) + "\n";
    s += "# learning_rate=" + detail::format_real(cfg.learning_rate) + "\n";
    s += "# batch_size=" + std::to_string(cfg.batch_size) + "\n";
    s += "# max_epochs=" + std::to_string(cfg.max_epochs) + "\n";
    s += "# patience=" + std::to_string(cfg.patience) + "\n";
    s += "# offset_epsilon=" + detail::format_real(cfg.offset_epsilon) + "\n";
    s += "# censoring_mode=" + cfg.censoring_mode + "\n";
    s += "# censoring_threshold=" + detail::format_real(cfg.censoring_threshold) + "\n";
    s += "# k_folds=" + std::to_string(cfg.k_folds) + "\n";
    s += "# val_fraction=" + detail::format_real(cfg.val_fraction) + "\n";
    s += "# seed=" + std::to_string(cfg.seed) + "\n";
    s += "# schema=" + cfg.schema + "\n";
    return s;
}

}  // namespace weimix
