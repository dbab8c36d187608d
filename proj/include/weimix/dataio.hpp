#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "weimix/errors.hpp"
#include "weimix/matrix.hpp"
#include "weimix/rng.hpp"

namespace weimix {

struct SurvivalRecord {
    std::vector<double> features;
    double time = 0.0;
    int delta = 0;

    bool operator==(const SurvivalRecord&) const = default;
};

/// Records plus post-expansion feature metadata. Qualitative columns are
/// one-hot expanded at load time, so every stored feature is numeric.
struct Dataset {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> feature_names;  // expanded names, "column=value" for one-hot
    std::vector<bool> qualitative_mask;      // true where the column came from a qualitative feature

    bool operator==(const Dataset&) const = default;

    std::size_t n() const { return records.size(); }
    std::size_t d() const { return feature_names.size(); }

    Matrix feature_matrix() const {
        Matrix x(n(), d());
        for (std::size_t i = 0; i < n(); ++i)
            std::copy(records[i].features.begin(), records[i].features.end(), x.row(i));
        return x;
    }

    std::vector<double> times() const {
        std::vector<double> t(n());
        for (std::size_t i = 0; i < n(); ++i) t[i] = records[i].time;
        return t;
    }

    std::vector<int> deltas() const {
        std::vector<int> d_(n());
        for (std::size_t i = 0; i < n(); ++i) d_[i] = records[i].delta;
        return d_;
    }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.feature_names = feature_names;
        out.qualitative_mask = qualitative_mask;
        out.records.reserve(idx.size());
        for (std::size_t i : idx) out.records.push_back(records.at(i));
        return out;
    }
};

struct FeatureSpec {
    std::string name;
    bool qualitative = false;
};

struct DatasetSchema {
    std::string time_column;
    std::string event_column;
    std::vector<FeatureSpec> features;
};

/// Schema file: JSON with "time", "event", and "features" (array of objects
/// with "name" and "kind" in {"quantitative", "qualitative"}).
inline DatasetSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("schema: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("schema: '" + path + "' is not valid JSON: " + e.what());
    }
    DatasetSchema s;
    try {
        s.time_column = j.at("time").get<std::string>();
        s.event_column = j.at("event").get<std::string>();
        for (const auto& f : j.at("features")) {
            FeatureSpec spec;
            spec.name = f.at("name").get<std::string>();
            const std::string kind = f.at("kind").get<std::string>();
            if (kind == "qualitative") spec.qualitative = true;
            else if (kind == "quantitative") spec.qualitative = false;
            else throw ConfigError("schema: feature kind must be quantitative or qualitative, got '" + kind + "'");
            s.features.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("schema: '" + path + "' is missing required fields: " + e.what());
    }
    if (s.features.empty()) throw ConfigError("schema: at least one feature required");
    return s;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    for (std::string& c : cells) {
        std::size_t a = 0, b = c.size();
        while (a < b && (c[a] == ' ' || c[a] == '\t')) ++a;
        while (b > a && (c[b - 1] == ' ' || c[b - 1] == '\t')) --b;
        c = c.substr(a, b - a);
    }
    return cells;
}

inline double parse_cell(const std::string& v, std::size_t row, const std::string& column) {
    if (v.empty())
        throw DataError("csv: row " + std::to_string(row) + " has a missing value in column '" + column + "'");
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw DataError("csv: row " + std::to_string(row) + " column '" + column + "' is not numeric: '" + v + "'");
    }
}

}  // namespace detail

/// Load a comma-delimited file with a header row against a schema. Row
/// numbers in errors are 1-based counting the header as row 1. Qualitative
/// features become one indicator column per distinct value, values sorted.
inline Dataset load_csv(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: '" + path + "' is empty");
    const std::vector<std::string> header = detail::split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    auto need = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw DataError("csv: missing column '" + name + "' in '" + path + "'");
        return it->second;
    };
    const std::size_t time_idx = need(schema.time_column);
    const std::size_t event_idx = need(schema.event_column);
    std::vector<std::size_t> feat_idx;
    for (const auto& f : schema.features) feat_idx.push_back(need(f.name));

    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("csv: row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw DataError("csv: '" + path + "' has no data rows");

    // Value inventory for qualitative columns (first pass).
    std::vector<std::vector<std::string>> levels(schema.features.size());
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
        if (!schema.features[f].qualitative) continue;
        std::set<std::string> values;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::string& v = rows[r][feat_idx[f]];
            if (v.empty())
                throw DataError("csv: row " + std::to_string(r + 2) + " has a missing value in column '" +
                                schema.features[f].name + "'");
            values.insert(v);
        }
        levels[f].assign(values.begin(), values.end());
    }

    Dataset ds;
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
        if (schema.features[f].qualitative) {
            for (const std::string& v : levels[f]) {
                ds.feature_names.push_back(schema.features[f].name + "=" + v);
                ds.qualitative_mask.push_back(true);
            }
        } else {
            ds.feature_names.push_back(schema.features[f].name);
            ds.qualitative_mask.push_back(false);
        }
    }

    std::vector<std::size_t> bad_time_rows;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t rowno = r + 2;  // header is row 1
        SurvivalRecord rec;
        rec.features.reserve(ds.d());
        for (std::size_t f = 0; f < schema.features.size(); ++f) {
            const std::string& cell = rows[r][feat_idx[f]];
            if (schema.features[f].qualitative) {
                for (const std::string& v : levels[f]) rec.features.push_back(cell == v ? 1.0 : 0.0);
            } else {
                rec.features.push_back(detail::parse_cell(cell, rowno, schema.features[f].name));
            }
        }
        rec.time = detail::parse_cell(rows[r][time_idx], rowno, schema.time_column);
        const std::string& ev = rows[r][event_idx];
        if (ev == "0") rec.delta = 0;
        else if (ev == "1") rec.delta = 1;
        else if (ev.empty()) throw DataError("csv: row " + std::to_string(rowno) + " is missing the event value");
        else throw DataError("csv: row " + std::to_string(rowno) + " event value must be 0 or 1, got '" + ev + "'");
        if (!std::isfinite(rec.time) || !(rec.time > 0.0)) {
            bad_time_rows.push_back(rowno);
            continue;
        }
        ds.records.push_back(std::move(rec));
    }
    if (!bad_time_rows.empty()) {
        std::string msg = "csv: non-positive time in row(s)";
        for (std::size_t r : bad_time_rows) msg += " " + std::to_string(r);
        throw DataError(msg);
    }
    return ds;
}

/// Write a dataset back out in the load_csv format with full double
/// precision, so load -> export -> load is the identity.
inline void export_csv(const Dataset& ds, const std::string& path, const std::string& time_column = "time",
                       const std::string& event_column = "event") {
    std::ofstream out(path);
    if (!out) throw DataError("csv: cannot write '" + path + "'");
    for (std::size_t f = 0; f < ds.d(); ++f) out << ds.feature_names[f] << ",";
    out << time_column << "," << event_column << "\n";
    char buf[32];
    for (const SurvivalRecord& rec : ds.records) {
        for (double v : rec.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        std::snprintf(buf, sizeof(buf), "%.17g", rec.time);
        out << buf << "," << rec.delta << "\n";
    }
}

/// Matching schema for an exported dataset: every expanded column is
/// quantitative (the indicators are already numeric).
inline void export_schema(const Dataset& ds, const std::string& path, const std::string& time_column = "time",
                          const std::string& event_column = "event") {
    nlohmann::json j;
    j["time"] = time_column;
    j["event"] = event_column;
    j["features"] = nlohmann::json::array();
    for (const std::string& name : ds.feature_names)
        j["features"].push_back({{"name", name}, {"kind", "quantitative"}});
    std::ofstream out(path);
    if (!out) throw DataError("schema: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

/// Per-feature standardization statistics, fitted on training data only.
struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> std;  // population standard deviation; 0 kept as-is

    bool operator==(const ScalerStats&) const = default;
};

inline ScalerStats fit_scaler(const Dataset& train) {
    if (train.n() == 0) throw DataError("fit_scaler: empty dataset");
    const std::size_t d = train.d();
    ScalerStats s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    for (const auto& rec : train.records)
        for (std::size_t f = 0; f < d; ++f) s.mean[f] += rec.features[f];
    for (std::size_t f = 0; f < d; ++f) s.mean[f] /= static_cast<double>(train.n());
    for (const auto& rec : train.records)
        for (std::size_t f = 0; f < d; ++f) {
            const double dv = rec.features[f] - s.mean[f];
            s.std[f] += dv * dv;
        }
    for (std::size_t f = 0; f < d; ++f) s.std[f] = std::sqrt(s.std[f] / static_cast<double>(train.n()));
    return s;
}

/// Standardize features; zero-variance columns use divisor 1 so a constant
/// column maps to all zeros instead of NaN.
inline Dataset apply_scaler(const ScalerStats& s, const Dataset& ds) {
    if (s.mean.size() != ds.d()) throw DataError("apply_scaler: dimension mismatch");
    Dataset out = ds;
    for (auto& rec : out.records)
        for (std::size_t f = 0; f < ds.d(); ++f) {
            const double divisor = s.std[f] > 0.0 ? s.std[f] : 1.0;
            rec.features[f] = (rec.features[f] - s.mean[f]) / divisor;
        }
    return out;
}

/// Cross-validation bookkeeping: which records each fold tests on, and the
/// train/validation split inside each fold's training portion.
struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::size_t> assignment;            // test fold index per record
    std::vector<std::vector<std::size_t>> train_idx;  // per fold, gradient-update rows
    std::vector<std::vector<std::size_t>> val_idx;    // per fold, early-stopping rows
    std::vector<std::vector<std::size_t>> test_idx;   // per fold, held-out rows
};

/// Deterministic k-fold plan: a seeded shuffle dealt round-robin into test
/// folds; within each training portion the tail of a second seeded shuffle is
/// held out for validation.
inline FoldPlan make_folds(std::size_t n, std::size_t k = 5, double val_fraction = 0.2,
                           std::uint64_t seed = 0) {
    if (k < 2) throw DataError("make_folds: k must be >= 2");
    if (n < k) throw DataError("make_folds: dataset smaller than k");
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
        throw DataError("make_folds: val_fraction must lie in (0, 1)");
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);

    FoldPlan plan;
    plan.k = k;
    plan.assignment.assign(n, 0);
    plan.train_idx.resize(k);
    plan.val_idx.resize(k);
    plan.test_idx.resize(k);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t fold = i % k;
        plan.assignment[order[i]] = fold;
        plan.test_idx[fold].push_back(order[i]);
    }
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> pool;
        pool.reserve(n - plan.test_idx[f].size());
        for (std::size_t i = 0; i < n; ++i)
            if (plan.assignment[i] != f) pool.push_back(i);
        rng.shuffle(pool);
        std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(pool.size())));
        if (n_val < 1) n_val = 1;
        if (pool.size() < n_val + 2)
            throw DataError("make_folds: training portion too small for the validation split");
        plan.val_idx[f].assign(pool.end() - static_cast<std::ptrdiff_t>(n_val), pool.end());
        plan.train_idx[f].assign(pool.begin(), pool.end() - static_cast<std::ptrdiff_t>(n_val));
        std::sort(plan.val_idx[f].begin(), plan.val_idx[f].end());
        std::sort(plan.train_idx[f].begin(), plan.train_idx[f].end());
        std::sort(plan.test_idx[f].begin(), plan.test_idx[f].end());
    }
    return plan;
}

}  // namespace weimix
