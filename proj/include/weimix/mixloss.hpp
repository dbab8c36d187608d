#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "weimix/matrix.hpp"
#include "weimix/weibull.hpp"

namespace weimix {

/// Output reparameterization: the heads emit values in (-1, inf) through ELU,
/// and the offsets below shift them into the admissible parameter ranges
/// beta > 1 and eta > eta_epsilon.
inline constexpr double kBetaOffset = 2.0;
inline constexpr double kEtaOffsetBase = 1.0;
inline constexpr double kDefaultEtaEpsilon = 1e-4;

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

/// How censored rows enter the likelihood. GlobalThreshold evaluates every
/// censored row's survival at the single threshold t_c; PerObservation uses
/// the row's own recorded time instead (for data with varying follow-up).
struct CensoringSpec {
    enum class Mode { GlobalThreshold, PerObservation };

    Mode mode = Mode::PerObservation;
    double t_c = 0.0;  // meaningful only in GlobalThreshold mode

    static CensoringSpec global_threshold(double tc) {
        CensoringSpec s;
        s.mode = Mode::GlobalThreshold;
        s.t_c = tc;
        return s;
    }
    static CensoringSpec per_observation() { return CensoringSpec{}; }

    void validate() const {
        if (mode == Mode::GlobalThreshold && (!std::isfinite(t_c) || !(t_c > 0.0)))
            throw std::invalid_argument("CensoringSpec: t_c must be finite and > 0");
    }
};

/// One mixture per observation: row i of each matrix parameterizes the
/// conditional distribution of observation i.
struct BatchParams {
    Matrix alpha;  // n x p, rows sum to 1
    Matrix beta;   // n x p, entries >= 1
    Matrix eta;    // n x p, entries > 0

    std::size_t n() const { return beta.rows(); }
    std::size_t p() const { return beta.cols(); }

    void validate() const {
        const std::size_t rows = n(), cols = p();
        if (cols == 0 || rows == 0)
            throw std::invalid_argument("BatchParams: empty batch");
        if (alpha.rows() != rows || alpha.cols() != cols || eta.rows() != rows || eta.cols() != cols)
            throw std::invalid_argument("BatchParams: alpha/beta/eta shapes differ");
        for (std::size_t i = 0; i < rows; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < cols; ++k) {
                const double a = alpha(i, k);
                if (!(a >= 0.0) || !(a <= 1.0))
                    throw std::invalid_argument("BatchParams: alpha entries must lie in [0,1]");
                sum += a;
                if (!(beta(i, k) >= 1.0)) throw std::invalid_argument("BatchParams: beta entries must be >= 1");
                if (!(eta(i, k) > 0.0)) throw std::invalid_argument("BatchParams: eta entries must be > 0");
            }
            if (std::abs(sum - 1.0) > 1e-7)
                throw std::invalid_argument("BatchParams: alpha rows must sum to 1");
        }
    }

    MixtureParams row_mixture(std::size_t i) const {
        MixtureParams m;
        m.components.reserve(p());
        for (std::size_t k = 0; k < p(); ++k)
            m.components.push_back({alpha(i, k), {beta(i, k), eta(i, k)}});
        return m;
    }
};

/// Raw head outputs before any output activation: alpha_logits feeds softmax
/// (absent when p = 1), beta_raw and eta_raw feed ELU plus offset.
struct HeadOutputs {
    Matrix alpha_logits;  // n x p for p > 1, otherwise 0 x 0
    Matrix beta_raw;      // n x p
    Matrix eta_raw;       // n x p

    std::size_t n() const { return beta_raw.rows(); }
    std::size_t p() const { return beta_raw.cols(); }
};

/// Row-wise softmax with max subtraction.
inline void softmax_rows(const Matrix& logits, Matrix& out) {
    const std::size_t n = logits.rows(), p = logits.cols();
    if (out.rows() != n || out.cols() != p) out = Matrix(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        const double* li = logits.row(i);
        double* oi = out.row(i);
        double mx = li[0];
        for (std::size_t k = 1; k < p; ++k) mx = std::max(mx, li[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
            oi[k] = std::exp(li[k] - mx);
            sum += oi[k];
        }
        for (std::size_t k = 0; k < p; ++k) oi[k] /= sum;
    }
}

/// Chain raw head outputs into valid mixture parameters:
/// alpha = softmax(logits) (or 1 when p = 1), beta = ELU(raw) + 2,
/// eta = ELU(raw) + 1 + eta_epsilon.
inline BatchParams apply_output_activations(const HeadOutputs& raw, double eta_epsilon = kDefaultEtaEpsilon) {
    const std::size_t n = raw.n(), p = raw.p();
    BatchParams out;
    out.beta = Matrix(n, p);
    out.eta = Matrix(n, p);
    if (p > 1) {
        if (raw.alpha_logits.rows() != n || raw.alpha_logits.cols() != p)
            throw std::invalid_argument("HeadOutputs: alpha_logits shape must be n x p when p > 1");
        softmax_rows(raw.alpha_logits, out.alpha);
    } else {
        out.alpha = Matrix(n, 1, 1.0);
    }
    const double eta_offset = kEtaOffsetBase + eta_epsilon;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < p; ++k) {
            out.beta(i, k) = elu(raw.beta_raw(i, k)) + kBetaOffset;
            out.eta(i, k) = elu(raw.eta_raw(i, k)) + eta_offset;
            assert(out.beta(i, k) > 1.0);
            assert(out.eta(i, k) > 0.0);
        }
    }
    return out;
}

namespace detail {

inline void check_batch_args(std::size_t n, const std::vector<double>& times, const std::vector<int>& deltas,
                             const CensoringSpec& cens) {
    cens.validate();
    if (times.size() != n || deltas.size() != n)
        throw std::invalid_argument("mixloss: times/deltas length must match batch rows");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(times[i]) || !(times[i] > 0.0))
            throw std::invalid_argument("mixloss: times must be positive and finite");
        if (deltas[i] != 0 && deltas[i] != 1)
            throw std::invalid_argument("mixloss: deltas must be 0 or 1");
    }
}

}  // namespace detail

/// Censored mixture negative log-likelihood, summed over the batch:
///   -Sum_i [ delta_i log f_mix(t_i) + (1 - delta_i) log S_mix(t*) ]
/// where t* is the global threshold or the row's own time per `cens`.
inline double negative_log_likelihood(const BatchParams& params, const std::vector<double>& times,
                                      const std::vector<int>& deltas, const CensoringSpec& cens) {
    params.validate();
    const std::size_t n = params.n(), p = params.p();
    detail::check_batch_args(n, times, deltas, cens);

    std::vector<double> c(p);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool event = deltas[i] == 1;
        const double t = event                                        ? times[i]
                         : cens.mode == CensoringSpec::Mode::GlobalThreshold ? cens.t_c
                                                                             : times[i];
        const double log_t = std::log(t);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p; ++k) {
            const double a = params.alpha(i, k);
            if (a <= 0.0) {
                c[k] = -std::numeric_limits<double>::infinity();
                continue;
            }
            const double beta = params.beta(i, k), eta = params.eta(i, k);
            const double z = std::pow(t / eta, beta);
            double phi = -z;
            if (event) phi += std::log(beta) - std::log(eta) + (beta - 1.0) * (log_t - std::log(eta));
            c[k] = std::log(a) + phi;
            if (c[k] > mx) mx = c[k];
        }
        if (!std::isfinite(mx)) {
            loss = std::numeric_limits<double>::infinity();
            break;
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k) acc += std::exp(c[k] - mx);
        loss -= mx + std::log(acc);
    }
    return loss;
}

/// Loss value plus analytic gradients with respect to the raw head outputs.
struct NllGradients {
    double value = 0.0;
    HeadOutputs grads;  // same shapes as the input raw outputs
};

/// Analytic backward pass of negative_log_likelihood through the output
/// activations. Per row, with c_k = log alpha_k + phi_k and responsibilities
/// r_k = exp(c_k - LSE(c)):
///   d(-LL)/d logit_j   = alpha_j - r_j                      (softmax)
///   d(-LL)/d beta_raw  = -r_k dphi/dbeta * elu'(beta_raw)   (offset slope 1)
///   d(-LL)/d eta_raw   = -r_k dphi/deta  * elu'(eta_raw)
/// where for an event row (density)   dphi/dbeta = 1/beta + L(1 - z),
///                                    dphi/deta  = beta (z - 1) / eta,
/// and for a censored row (survival)  dphi/dbeta = -z L,
///                                    dphi/deta  = beta z / eta,
/// with z = (t/eta)^beta and L = log t - log eta.
inline NllGradients nll_gradients(const HeadOutputs& raw, const std::vector<double>& times,
                                  const std::vector<int>& deltas, const CensoringSpec& cens,
                                  double eta_epsilon = kDefaultEtaEpsilon) {
    const std::size_t n = raw.n(), p = raw.p();
    if (raw.eta_raw.rows() != n || raw.eta_raw.cols() != p)
        throw std::invalid_argument("HeadOutputs: beta_raw/eta_raw shapes differ");
    detail::check_batch_args(n, times, deltas, cens);

    const BatchParams params = apply_output_activations(raw, eta_epsilon);

    NllGradients out;
    out.grads.beta_raw = Matrix(n, p);
    out.grads.eta_raw = Matrix(n, p);
    if (p > 1) out.grads.alpha_logits = Matrix(n, p);

    std::vector<double> c(p), z(p), L(p);
    for (std::size_t i = 0; i < n; ++i) {
        const bool event = deltas[i] == 1;
        const double t = event                                        ? times[i]
                         : cens.mode == CensoringSpec::Mode::GlobalThreshold ? cens.t_c
                                                                             : times[i];
        const double log_t = std::log(t);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p; ++k) {
            const double a = params.alpha(i, k);
            const double beta = params.beta(i, k), eta = params.eta(i, k);
            z[k] = std::pow(t / eta, beta);
            L[k] = log_t - std::log(eta);
            if (a <= 0.0) {
                c[k] = -std::numeric_limits<double>::infinity();
                continue;
            }
            double phi = -z[k];
            if (event) phi += std::log(beta) - std::log(eta) + (beta - 1.0) * L[k];
            c[k] = std::log(a) + phi;
            if (c[k] > mx) mx = c[k];
        }
        if (!std::isfinite(mx)) {
            // Degenerate row (all components underflowed): the loss is +inf
            // and training must abort; gradients are meaningless here.
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k) acc += std::exp(c[k] - mx);
        const double ll = mx + std::log(acc);
        out.value -= ll;

        for (std::size_t k = 0; k < p; ++k) {
            const double r = std::exp(c[k] - ll);
            if (p > 1) out.grads.alpha_logits(i, k) = params.alpha(i, k) - r;
            if (r == 0.0) continue;
            const double beta = params.beta(i, k), eta = params.eta(i, k);
            double dphi_dbeta, dphi_deta;
            if (event) {
                dphi_dbeta = 1.0 / beta + L[k] * (1.0 - z[k]);
                dphi_deta = beta * (z[k] - 1.0) / eta;
            } else {
                dphi_dbeta = -z[k] * L[k];
                dphi_deta = beta * z[k] / eta;
            }
            out.grads.beta_raw(i, k) = -r * dphi_dbeta * elu_grad(raw.beta_raw(i, k));
            out.grads.eta_raw(i, k) = -r * dphi_deta * elu_grad(raw.eta_raw(i, k));
        }
    }
    return out;
}

}  // namespace weimix
