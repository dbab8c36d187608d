#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "weimix/dataio.hpp"
#include "weimix/errors.hpp"
#include "weimix/neuralnet.hpp"

namespace weimix {

/// A network plus everything needed to run it on raw data: the feature
/// scaler it was trained with and the expanded feature names it expects.
struct TrainedModel {
    NetworkModel net;
    ScalerStats scaler;
    std::vector<std::string> feature_names;
};

namespace detail {

inline constexpr int kModelFormatVersion = 1;

inline void check_finite_vec(const std::vector<double>& v, const std::string& name) {
    for (double x : v)
        if (!std::isfinite(x)) throw DataError("model: tensor '" + name + "' contains non-finite values");
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.rows() * m.cols())
        throw DataError("model: tensor '" + name + "' has inconsistent shape");
    m.storage() = data;
    return m;
}

inline nlohmann::json linear_to_json(const Linear& l, const std::string& name) {
    check_finite_vec(l.w.storage(), name + ".w");
    check_finite_vec(l.b, name + ".b");
    return {{"w", matrix_to_json(l.w)}, {"b", l.b}};
}

inline Linear linear_from_json(const nlohmann::json& j, const std::string& name, std::size_t in,
                               std::size_t out) {
    Linear l;
    l.w = matrix_from_json(j.at("w"), name + ".w");
    l.b = j.at("b").get<std::vector<double>>();
    if (l.w.rows() != in || l.w.cols() != out || l.b.size() != out)
        throw DataError("model: layer '" + name + "' shape does not match the architecture");
    return l;
}

inline nlohmann::json bn_to_json(const BatchNorm& bn, const std::string& name) {
    check_finite_vec(bn.scale, name + ".scale");
    check_finite_vec(bn.shift, name + ".shift");
    check_finite_vec(bn.running_mean, name + ".running_mean");
    check_finite_vec(bn.running_var, name + ".running_var");
    return {{"scale", bn.scale},
            {"shift", bn.shift},
            {"running_mean", bn.running_mean},
            {"running_var", bn.running_var},
            {"momentum", bn.momentum},
            {"eps", bn.eps}};
}

inline BatchNorm bn_from_json(const nlohmann::json& j, const std::string& name, std::size_t width) {
    BatchNorm bn;
    bn.scale = j.at("scale").get<std::vector<double>>();
    bn.shift = j.at("shift").get<std::vector<double>>();
    bn.running_mean = j.at("running_mean").get<std::vector<double>>();
    bn.running_var = j.at("running_var").get<std::vector<double>>();
    bn.momentum = j.at("momentum").get<double>();
    bn.eps = j.at("eps").get<double>();
    if (bn.scale.size() != width || bn.shift.size() != width || bn.running_mean.size() != width ||
        bn.running_var.size() != width)
        throw DataError("model: normalization layer '" + name + "' width does not match the architecture");
    for (double v : bn.running_var)
        if (!(v >= 0.0)) throw DataError("model: layer '" + name + "' has negative running variance");
    return bn;
}

}  // namespace detail

/// Self-describing flat file. Doubles survive the JSON round trip exactly,
/// so a reloaded model reproduces inference outputs bitwise.
inline void save_model(const TrainedModel& tm, const std::string& path) {
    const Architecture& a = tm.net.arch;
    if (tm.scaler.mean.size() != a.input_dim || tm.scaler.std.size() != a.input_dim ||
        tm.feature_names.size() != a.input_dim)
        throw DataError("model: scaler/feature metadata does not match input_dim");
    nlohmann::json j;
    j["format"] = "weimix-model";
    j["version"] = detail::kModelFormatVersion;
    j["architecture"] = {{"input_dim", a.input_dim},
                         {"p", a.p},
                         {"trunk", std::vector<std::size_t>(a.trunk.begin(), a.trunk.end())},
                         {"head", std::vector<std::size_t>(a.head.begin(), a.head.end())}};
    j["eta_epsilon"] = tm.net.eta_epsilon;
    j["feature_names"] = tm.feature_names;
    j["scaler"] = {{"mean", tm.scaler.mean}, {"std", tm.scaler.std}};
    j["fc1"] = detail::linear_to_json(tm.net.fc1, "fc1");
    j["bn1"] = detail::bn_to_json(tm.net.bn1, "bn1");
    j["fc2"] = detail::linear_to_json(tm.net.fc2, "fc2");
    j["fc3"] = detail::linear_to_json(tm.net.fc3, "fc3");
    j["reg1"] = detail::linear_to_json(tm.net.reg1, "reg1");
    j["reg_bn"] = detail::bn_to_json(tm.net.reg_bn, "reg_bn");
    j["reg2"] = detail::linear_to_json(tm.net.reg2, "reg2");
    j["reg_out"] = detail::linear_to_json(tm.net.reg_out, "reg_out");
    if (a.has_clf()) {
        j["clf1"] = detail::linear_to_json(tm.net.clf1, "clf1");
        j["clf_bn"] = detail::bn_to_json(tm.net.clf_bn, "clf_bn");
        j["clf2"] = detail::linear_to_json(tm.net.clf2, "clf2");
        j["clf_out"] = detail::linear_to_json(tm.net.clf_out, "clf_out");
    }
    std::ofstream out(path);
    if (!out) throw DataError("model: cannot write '" + path + "'");
    out << j.dump(1) << "\n";
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("model: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model: '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "weimix-model")
            throw DataError("model: '" + path + "' is not a model file");
        if (j.at("version").get<int>() != detail::kModelFormatVersion)
            throw DataError("model: unsupported version in '" + path + "'");
        TrainedModel tm;
        Architecture a;
        const auto& ja = j.at("architecture");
        a.input_dim = ja.at("input_dim").get<std::size_t>();
        a.p = ja.at("p").get<std::size_t>();
        const auto trunk = ja.at("trunk").get<std::vector<std::size_t>>();
        const auto head = ja.at("head").get<std::vector<std::size_t>>();
        if (trunk.size() != a.trunk.size() || head.size() != a.head.size())
            throw DataError("model: unexpected layer counts in '" + path + "'");
        std::copy(trunk.begin(), trunk.end(), a.trunk.begin());
        std::copy(head.begin(), head.end(), a.head.begin());
        a.validate();
        tm.net.arch = a;
        tm.net.eta_epsilon = j.at("eta_epsilon").get<double>();
        if (!(tm.net.eta_epsilon > 0.0)) throw DataError("model: eta_epsilon must be > 0");
        tm.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        tm.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
        tm.scaler.std = j.at("scaler").at("std").get<std::vector<double>>();
        if (tm.feature_names.size() != a.input_dim || tm.scaler.mean.size() != a.input_dim ||
            tm.scaler.std.size() != a.input_dim)
            throw DataError("model: scaler/feature metadata does not match input_dim");
        tm.net.fc1 = detail::linear_from_json(j.at("fc1"), "fc1", a.input_dim, a.trunk[0]);
        tm.net.bn1 = detail::bn_from_json(j.at("bn1"), "bn1", a.trunk[0]);
        tm.net.fc2 = detail::linear_from_json(j.at("fc2"), "fc2", a.trunk[0], a.trunk[1]);
        tm.net.fc3 = detail::linear_from_json(j.at("fc3"), "fc3", a.trunk[1], a.trunk[2]);
        tm.net.reg1 = detail::linear_from_json(j.at("reg1"), "reg1", a.trunk[2], a.head[0]);
        tm.net.reg_bn = detail::bn_from_json(j.at("reg_bn"), "reg_bn", a.head[0]);
        tm.net.reg2 = detail::linear_from_json(j.at("reg2"), "reg2", a.head[0], a.head[1]);
        tm.net.reg_out = detail::linear_from_json(j.at("reg_out"), "reg_out", a.head[1], 2 * a.p);
        if (a.has_clf()) {
            tm.net.clf1 = detail::linear_from_json(j.at("clf1"), "clf1", a.trunk[2], a.head[0]);
            tm.net.clf_bn = detail::bn_from_json(j.at("clf_bn"), "clf_bn", a.head[0]);
            tm.net.clf2 = detail::linear_from_json(j.at("clf2"), "clf2", a.head[0], a.head[1]);
            tm.net.clf_out = detail::linear_from_json(j.at("clf_out"), "clf_out", a.head[1], a.p);
        }
        return tm;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model: '" + path + "' is missing required fields: " + e.what());
    }
}

}  // namespace weimix
