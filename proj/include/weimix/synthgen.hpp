#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "weimix/dataio.hpp"
#include "weimix/mixloss.hpp"
#include "weimix/rng.hpp"
#include "weimix/weibull.hpp"

namespace weimix {

enum class GenFunction { Linear, Quadratic, Cubic };

inline const char* gen_function_name(GenFunction f) {
    switch (f) {
        case GenFunction::Linear: return "linear";
        case GenFunction::Quadratic: return "quadratic";
        default: return "cubic";
    }
}

inline GenFunction parse_gen_function(const std::string& s) {
    if (s == "linear") return GenFunction::Linear;
    if (s == "quadratic") return GenFunction::Quadratic;
    if (s == "cubic") return GenFunction::Cubic;
    throw std::invalid_argument("unknown generator function '" + s + "'");
}

struct GeneratorSpec {
    GenFunction function_id = GenFunction::Linear;
    std::size_t p = 1;  // 1 or 2
    std::size_t n = 10000;
    double censor_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (p != 1 && p != 2) throw std::invalid_argument("GeneratorSpec: p must be 1 or 2");
        if (n == 0) throw std::invalid_argument("GeneratorSpec: n must be > 0");
        if (!(censor_fraction >= 0.0) || !(censor_fraction < 1.0))
            throw std::invalid_argument("GeneratorSpec: censor_fraction must lie in [0, 1)");
    }
};

namespace detail {

/// The three covariate-to-parameter polynomial systems. Row order is
/// (beta_1, eta_1, beta_0.7, eta_0.7, beta_0.3, eta_0.3); columns multiply
/// descending powers of x ending at the constant term.
inline void true_param_row(GenFunction f, double x, double out[6]) {
    switch (f) {
        case GenFunction::Linear: {
            static const double m[6][2] = {{3, 2}, {2, 1}, {2, 1}, {1, 2}, {1, 2}, {3, 1}};
            for (int r = 0; r < 6; ++r) out[r] = m[r][0] * x + m[r][1];
            return;
        }
        case GenFunction::Quadratic: {
            static const double m[6][3] = {{2, 1, 1}, {1, 2, 1}, {2, 2, 1}, {1, 3, 1}, {1, 1, 2}, {1, 0, 2}};
            for (int r = 0; r < 6; ++r) out[r] = (m[r][0] * x + m[r][1]) * x + m[r][2];
            return;
        }
        default: {
            static const double m[6][4] = {{2, 0, 1, 1}, {1, 1, 0, 1}, {2, 0, 1, 1},
                                           {1, 1, 0, 1}, {1, 2, 0, 1}, {3, 2, 0, 1}};
            for (int r = 0; r < 6; ++r) out[r] = ((m[r][0] * x + m[r][1]) * x + m[r][2]) * x + m[r][3];
            return;
        }
    }
}

}  // namespace detail

/// Ground-truth conditional mixture at covariate x. For p = 1 the single
/// component row is used; for p = 2 the weights are fixed at (0.7, 0.3).
inline MixtureParams true_params(GenFunction function_id, std::size_t p, double x) {
    if (p != 1 && p != 2) throw std::invalid_argument("true_params: p must be 1 or 2");
    if (!(x >= 0.0) || !(x <= 1.0)) throw std::domain_error("true_params: x must lie in [0, 1]");
    double v[6];
    detail::true_param_row(function_id, x, v);
    MixtureParams m;
    if (p == 1) {
        m.components.push_back({1.0, {v[0], v[1]}});
    } else {
        m.components.push_back({0.7, {v[2], v[3]}});
        m.components.push_back({0.3, {v[4], v[5]}});
    }
    m.validate();
    return m;
}

struct GroundTruth {
    std::vector<MixtureParams> params;  // one mixture per observation
    double real_nll = 0.0;              // loss of the full sample at the true parameters
};

struct SynthData {
    Dataset dataset;
    GroundTruth truth;
    CensoringSpec censoring;  // GlobalThreshold at the realized threshold
    double threshold = 0.0;
};

/// Loss at the true per-observation parameters over a subset of rows (the
/// reference bar that a trained model's held-out loss is compared against).
inline double real_nll(const SynthData& sd, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw std::invalid_argument("real_nll: empty index set");
    const std::size_t p = sd.truth.params.at(0).size();
    BatchParams bp;
    bp.alpha = Matrix(idx.size(), p);
    bp.beta = Matrix(idx.size(), p);
    bp.eta = Matrix(idx.size(), p);
    std::vector<double> times(idx.size());
    std::vector<int> deltas(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t i = idx[r];
        const MixtureParams& m = sd.truth.params.at(i);
        for (std::size_t k = 0; k < p; ++k) {
            bp.alpha(r, k) = m.components[k].alpha;
            bp.beta(r, k) = m.components[k].params.beta;
            bp.eta(r, k) = m.components[k].params.eta;
        }
        times[r] = sd.dataset.records.at(i).time;
        deltas[r] = sd.dataset.records.at(i).delta;
    }
    return negative_log_likelihood(bp, times, deltas, sd.censoring);
}

inline double real_nll(const SynthData& sd) {
    std::vector<std::size_t> all(sd.dataset.n());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return real_nll(sd, all);
}

/// Type-7 quantile (linear interpolation between order statistics) of a
/// sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty sample");
    if (!(q >= 0.0) || !(q <= 1.0)) throw std::invalid_argument("sorted_quantile: q must lie in [0, 1]");
    if (q >= 1.0) return sorted.back();
    if (q <= 0.0) return sorted.front();
    const double h = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Draw covariates from U[0,1], lifetimes from the conditional ground truth,
/// then censor at the empirical (1 - censor_fraction) quantile of the drawn
/// times: delta = 1 iff t <= threshold, and the likelihood threshold is that
/// same quantile. The default censor_fraction = 0.5 censors at the median.
inline SynthData generate(const GeneratorSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    SynthData out;
    out.dataset.feature_names = {"x"};
    out.dataset.qualitative_mask = {false};
    out.dataset.records.resize(spec.n);
    out.truth.params.resize(spec.n);

    std::vector<double> times(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double x = rng.uniform01();
        out.truth.params[i] = true_params(spec.function_id, spec.p, x);
        times[i] = sample(out.truth.params[i], rng);
        out.dataset.records[i].features = {x};
        out.dataset.records[i].time = times[i];
    }

    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    out.threshold = sorted_quantile(sorted, 1.0 - spec.censor_fraction);
    for (std::size_t i = 0; i < spec.n; ++i)
        out.dataset.records[i].delta = times[i] <= out.threshold ? 1 : 0;
    out.censoring = CensoringSpec::global_threshold(out.threshold);
    out.truth.real_nll = real_nll(out);
    return out;
}

}  // namespace weimix
