#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "weimix/gamma.hpp"
#include "weimix/rng.hpp"

namespace weimix {

/// Two-parameter Weibull. beta = 1 is accepted at the API boundary (the
/// exponential special case) even though trained models always emit beta > 1.
struct WeibullParams {
    double beta = 1.0;
    double eta = 1.0;

    void validate() const {
        if (!(beta >= 1.0) || !std::isfinite(beta))
            throw std::domain_error("WeibullParams: beta must be finite and >= 1");
        if (!(eta > 0.0) || !std::isfinite(eta))
            throw std::domain_error("WeibullParams: eta must be finite and > 0");
    }
};

/// Convex combination of Weibull components. p = 1 is a valid mixture and all
/// mixture operations reduce to the single-component form bitwise in that case.
struct MixtureParams {
    struct Component {
        double alpha = 1.0;
        WeibullParams params;
    };
    std::vector<Component> components;

    std::size_t size() const { return components.size(); }

    void validate() const {
        if (components.empty())
            throw std::domain_error("MixtureParams: at least one component required");
        double sum = 0.0;
        for (const auto& c : components) {
            if (!(c.alpha >= 0.0) || !std::isfinite(c.alpha))
                throw std::domain_error("MixtureParams: alpha must be finite and >= 0");
            c.params.validate();
            sum += c.alpha;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::domain_error("MixtureParams: alphas must sum to 1");
    }

    static MixtureParams single(double beta, double eta) {
        MixtureParams m;
        m.components.push_back({1.0, {beta, eta}});
        return m;
    }

    static MixtureParams make(const std::vector<double>& alphas,
                              const std::vector<double>& betas,
                              const std::vector<double>& etas) {
        if (alphas.size() != betas.size() || betas.size() != etas.size())
            throw std::domain_error("MixtureParams: alpha/beta/eta lengths differ");
        MixtureParams m;
        m.components.reserve(alphas.size());
        for (std::size_t k = 0; k < alphas.size(); ++k)
            m.components.push_back({alphas[k], {betas[k], etas[k]}});
        return m;
    }
};

namespace detail {

inline void check_time(double t, const char* op) {
    if (!std::isfinite(t) || !(t > 0.0))
        throw std::domain_error(std::string(op) + ": t must be a positive finite time");
}

}  // namespace detail

/// log S(t) = -(t/eta)^beta. Stays in the log domain; never forms exp then log.
inline double log_survival(double t, const WeibullParams& w) {
    w.validate();
    detail::check_time(t, "log_survival");
    return -std::pow(t / w.eta, w.beta);
}

/// log f(t) = log beta - log eta + (beta-1)(log t - log eta) - (t/eta)^beta.
inline double log_density(double t, const WeibullParams& w) {
    w.validate();
    detail::check_time(t, "log_density");
    const double log_ratio = std::log(t) - std::log(w.eta);
    return std::log(w.beta) - std::log(w.eta) + (w.beta - 1.0) * log_ratio - std::pow(t / w.eta, w.beta);
}

namespace detail {

/// log Sum_k alpha_k exp(logv_k) via log-sum-exp with max subtraction.
/// Components with alpha = 0 are skipped so they never produce log(0).
template <typename LogValueFn>
inline double mixture_lse(const MixtureParams& m, LogValueFn&& logv) {
    double max_c = -std::numeric_limits<double>::infinity();
    std::vector<double> cs;
    cs.reserve(m.components.size());
    bool any = false;
    for (const auto& c : m.components) {
        if (c.alpha <= 0.0) {
            cs.push_back(-std::numeric_limits<double>::infinity());
            continue;
        }
        any = true;
        const double v = std::log(c.alpha) + logv(c.params);
        cs.push_back(v);
        if (v > max_c) max_c = v;
    }
    if (!any) throw std::domain_error("mixture: all component weights are zero");
    if (!std::isfinite(max_c)) return max_c;
    double acc = 0.0;
    for (double v : cs) acc += std::exp(v - max_c);
    return max_c + std::log(acc);
}

}  // namespace detail

inline double mixture_log_survival(double t, const MixtureParams& m) {
    m.validate();
    if (m.components.size() == 1) return log_survival(t, m.components[0].params);
    detail::check_time(t, "mixture_log_survival");
    return detail::mixture_lse(m, [t](const WeibullParams& w) { return -std::pow(t / w.eta, w.beta); });
}

inline double mixture_log_density(double t, const MixtureParams& m) {
    m.validate();
    if (m.components.size() == 1) return log_density(t, m.components[0].params);
    detail::check_time(t, "mixture_log_density");
    const double log_t = std::log(t);
    return detail::mixture_lse(m, [t, log_t](const WeibullParams& w) {
        const double log_ratio = log_t - std::log(w.eta);
        return std::log(w.beta) - std::log(w.eta) + (w.beta - 1.0) * log_ratio - std::pow(t / w.eta, w.beta);
    });
}

/// mu = Sum_k alpha_k eta_k Gamma(1 + 1/beta_k). With beta = 1 the gamma
/// factor is exactly 1, so an exponential component contributes alpha*eta
/// without rounding.
inline double mean_lifetime(const MixtureParams& m) {
    m.validate();
    double mu = 0.0;
    for (const auto& c : m.components)
        mu += c.alpha * c.params.eta * gamma_fn(1.0 + 1.0 / c.params.beta);
    return mu;
}

/// Inverse-transform draw for one component: t = eta * (-ln u)^(1/beta).
inline double sample_time(const WeibullParams& w, double u) {
    w.validate();
    if (!(u > 0.0) || !(u < 1.0))
        throw std::domain_error("sample_time: u must lie in (0, 1)");
    return w.eta * std::pow(-std::log(u), 1.0 / w.beta);
}

/// Draw from the mixture: pick component k with probability alpha_k (one
/// uniform, cumulative scan), then invert that component's CDF (one uniform).
inline double sample(const MixtureParams& m, Rng& rng) {
    m.validate();
    const double u = rng.uniform01();
    double cum = 0.0;
    std::size_t pick = m.components.size() - 1;
    for (std::size_t k = 0; k < m.components.size(); ++k) {
        cum += m.components[k].alpha;
        if (u < cum) {
            pick = k;
            break;
        }
    }
    return sample_time(m.components[pick].params, rng.uniform_open01());
}

}  // namespace weimix
