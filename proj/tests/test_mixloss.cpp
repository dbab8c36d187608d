#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "weimix/mixloss.hpp"
#include "weimix/rng.hpp"
#include "weimix/weibull.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace weimix;

namespace {

// Frozen scalar oracle: -(log f_mix(1) + log S_mix(2)) for the mixture
// alpha=(0.7,0.3), (beta,eta)=(1,1),(2,2).
constexpr double kTwoRowNll = 2.5668669985310283;

BatchParams constant_params(std::size_t n, double alpha_first, double beta1, double eta1,
                            double beta2 = 0.0, double eta2 = 0.0) {
    const std::size_t p = beta2 > 0.0 ? 2 : 1;
    BatchParams bp;
    bp.alpha = Matrix(n, p);
    bp.beta = Matrix(n, p);
    bp.eta = Matrix(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        bp.alpha(i, 0) = alpha_first;
        bp.beta(i, 0) = beta1;
        bp.eta(i, 0) = eta1;
        if (p == 2) {
            bp.alpha(i, 1) = 1.0 - alpha_first;
            bp.beta(i, 1) = beta2;
            bp.eta(i, 1) = eta2;
        }
    }
    return bp;
}

HeadOutputs random_raw(std::size_t n, std::size_t p, Rng& rng) {
    HeadOutputs raw;
    raw.beta_raw = Matrix(n, p);
    raw.eta_raw = Matrix(n, p);
    if (p > 1) raw.alpha_logits = Matrix(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            raw.beta_raw(i, k) = 2.0 * rng.uniform01() - 1.0;
            raw.eta_raw(i, k) = 2.0 * rng.uniform01() - 1.0;
            if (p > 1) raw.alpha_logits(i, k) = 2.0 * rng.uniform01() - 1.0;
        }
    return raw;
}

double loss_of_raw(const HeadOutputs& raw, const std::vector<double>& times,
                   const std::vector<int>& deltas, const CensoringSpec& cens) {
    return negative_log_likelihood(apply_output_activations(raw), times, deltas, cens);
}

}  // namespace

TEST_CASE("single-observation losses match the closed forms") {
    CHECK(negative_log_likelihood(constant_params(1, 1.0, 1.0, 1.0), {1.0}, {1},
                                  CensoringSpec::per_observation()) == 1.0);
    CHECK(negative_log_likelihood(constant_params(1, 1.0, 1.0, 1.0), {0.7}, {0},
                                  CensoringSpec::global_threshold(2.0)) == 2.0);
}

TEST_CASE("two-row mixture loss matches the frozen oracle") {
    const BatchParams bp = constant_params(2, 0.7, 1.0, 1.0, 2.0, 2.0);
    const std::vector<double> times = {1.0, 1.3};  // censored row's own time is ignored
    const std::vector<int> deltas = {1, 0};
    const double loss = negative_log_likelihood(bp, times, deltas, CensoringSpec::global_threshold(2.0));
    CHECK_THAT(loss, WithinRel(kTwoRowNll, 1e-13));

    // Compositional identity against the mixture primitives.
    const MixtureParams m = bp.row_mixture(0);
    CHECK_THAT(loss, WithinRel(-mixture_log_density(1.0, m) - mixture_log_survival(2.0, m), 1e-14));
}

TEST_CASE("per-observation censoring uses each row's own time") {
    const BatchParams bp = constant_params(1, 1.0, 1.0, 1.0);
    const double loss =
        negative_log_likelihood(bp, {3.0}, {0}, CensoringSpec::per_observation());
    CHECK(loss == 3.0);  // -log S(3) for the unit exponential
}

TEST_CASE("loss is permutation invariant and additive under duplication") {
    Rng rng(5);
    const std::size_t n = 17;
    BatchParams bp;
    bp.alpha = Matrix(n, 2);
    bp.beta = Matrix(n, 2);
    bp.eta = Matrix(n, 2);
    std::vector<double> times(n);
    std::vector<int> deltas(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 0.2 + 0.6 * rng.uniform01();
        bp.alpha(i, 0) = a;
        bp.alpha(i, 1) = 1.0 - a;
        for (std::size_t k = 0; k < 2; ++k) {
            bp.beta(i, k) = 1.0 + 3.0 * rng.uniform01();
            bp.eta(i, k) = 0.5 + 3.0 * rng.uniform01();
        }
        times[i] = 0.2 + 4.0 * rng.uniform01();
        deltas[i] = rng.uniform01() < 0.5 ? 1 : 0;
    }
    const CensoringSpec cens = CensoringSpec::global_threshold(2.5);
    const double base = negative_log_likelihood(bp, times, deltas, cens);

    // Reverse the row order.
    BatchParams rev = bp;
    std::vector<double> rtimes(n);
    std::vector<int> rdeltas(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = n - 1 - i;
        for (std::size_t k = 0; k < 2; ++k) {
            rev.alpha(i, k) = bp.alpha(j, k);
            rev.beta(i, k) = bp.beta(j, k);
            rev.eta(i, k) = bp.eta(j, k);
        }
        rtimes[i] = times[j];
        rdeltas[i] = deltas[j];
    }
    CHECK_THAT(negative_log_likelihood(rev, rtimes, rdeltas, cens), WithinRel(base, 1e-12));

    // Duplicate every observation.
    BatchParams dup;
    dup.alpha = Matrix(2 * n, 2);
    dup.beta = Matrix(2 * n, 2);
    dup.eta = Matrix(2 * n, 2);
    std::vector<double> dtimes(2 * n);
    std::vector<int> ddeltas(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const std::size_t j = i % n;
        for (std::size_t k = 0; k < 2; ++k) {
            dup.alpha(i, k) = bp.alpha(j, k);
            dup.beta(i, k) = bp.beta(j, k);
            dup.eta(i, k) = bp.eta(j, k);
        }
        dtimes[i] = times[j];
        ddeltas[i] = deltas[j];
    }
    CHECK_THAT(negative_log_likelihood(dup, dtimes, ddeltas, cens), WithinRel(2.0 * base, 1e-12));
}

TEST_CASE("batch validation catches contract violations") {
    BatchParams bp = constant_params(2, 1.0, 1.0, 1.0);
    const CensoringSpec cens = CensoringSpec::per_observation();
    CHECK_THROWS_AS(negative_log_likelihood(bp, {1.0}, {1, 1}, cens), std::invalid_argument);
    CHECK_THROWS_AS(negative_log_likelihood(bp, {1.0, 2.0}, {1, 2}, cens), std::invalid_argument);
    CHECK_THROWS_AS(negative_log_likelihood(bp, {1.0, 0.0}, {1, 1}, cens), std::invalid_argument);
    bp.beta(0, 0) = 0.5;
    CHECK_THROWS_AS(negative_log_likelihood(bp, {1.0, 2.0}, {1, 1}, cens), std::invalid_argument);
    CHECK_THROWS_AS(CensoringSpec::global_threshold(0.0).validate(), std::invalid_argument);
}

TEST_CASE("grid search over the loss recovers the uncensored Weibull MLE") {
    // Oracle: the classical fixed-point iteration for the uncensored MLE,
    // written independently of the loss implementation.
    Rng rng(2024);
    const std::size_t n = 600;
    std::vector<double> t(n);
    std::vector<int> d(n, 1);
    const MixtureParams truth = MixtureParams::single(2.0, 1.5);
    for (double& v : t) v = sample(truth, rng);

    double mean_log = 0.0;
    for (double v : t) mean_log += std::log(v);
    mean_log /= static_cast<double>(n);
    double beta_hat = 1.0;
    for (int it = 0; it < 200; ++it) {
        double s0 = 0.0, s1 = 0.0;
        for (double v : t) {
            const double w = std::pow(v, beta_hat);
            s0 += w;
            s1 += w * std::log(v);
        }
        const double next = 1.0 / (s1 / s0 - mean_log);
        if (std::abs(next - beta_hat) < 1e-12) {
            beta_hat = next;
            break;
        }
        beta_hat = next;
    }
    double eta_hat = 0.0;
    for (double v : t) eta_hat += std::pow(v, beta_hat);
    eta_hat = std::pow(eta_hat / static_cast<double>(n), 1.0 / beta_hat);

    const double step = 0.02;
    double best_beta = 0.0, best_eta = 0.0, best = std::numeric_limits<double>::infinity();
    for (double beta = 1.0; beta <= 3.5; beta += step) {
        for (double eta = 0.6; eta <= 2.6; eta += step) {
            const double loss = negative_log_likelihood(constant_params(n, 1.0, beta, eta), t, d,
                                                        CensoringSpec::per_observation());
            if (loss < best) {
                best = loss;
                best_beta = beta;
                best_eta = eta;
            }
        }
    }
    CHECK_THAT(best_beta, WithinAbs(beta_hat, step + 1e-9));
    CHECK_THAT(best_eta, WithinAbs(eta_hat, step + 1e-9));
}

TEST_CASE("output activations map raw values into the admissible region") {
    HeadOutputs raw;
    raw.beta_raw = Matrix(1, 1, 0.0);
    raw.eta_raw = Matrix(1, 1, 0.0);
    BatchParams out = apply_output_activations(raw);
    CHECK(out.beta(0, 0) == 2.0);
    CHECK(out.eta(0, 0) == 1.0 + 1e-4);
    CHECK(out.alpha(0, 0) == 1.0);

    // A post-activation head output of -0.5 lands at beta = 1.5.
    raw.beta_raw(0, 0) = std::log(0.5);
    out = apply_output_activations(raw);
    CHECK_THAT(out.beta(0, 0), WithinRel(1.5, 1e-14));

    raw.beta_raw(0, 0) = 0.25;  // positive branch is the identity
    out = apply_output_activations(raw);
    CHECK(out.beta(0, 0) == 2.25);
}

TEST_CASE("softmax turns symmetric logits into equal weights") {
    Matrix logits(2, 2);
    logits(0, 0) = 0.0;
    logits(0, 1) = 0.0;
    logits(1, 0) = 1000.0;  // max subtraction keeps this finite
    logits(1, 1) = 0.0;
    Matrix out;
    softmax_rows(logits, out);
    CHECK(out(0, 0) == 0.5);
    CHECK(out(0, 1) == 0.5);
    CHECK(out(1, 0) + out(1, 1) == 1.0);
    CHECK(out(1, 0) > 0.999);
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(31);
    for (std::size_t p : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        const std::size_t n = 6;
        HeadOutputs raw = random_raw(n, p, rng);
        std::vector<double> times(n);
        std::vector<int> deltas(n);
        for (std::size_t i = 0; i < n; ++i) {
            times[i] = 0.3 + 2.5 * rng.uniform01();
            deltas[i] = i % 2 == 0 ? 1 : 0;
        }
        for (const CensoringSpec& cens :
             {CensoringSpec::per_observation(), CensoringSpec::global_threshold(1.7)}) {
            const NllGradients g = nll_gradients(raw, times, deltas, cens);
            CHECK_THAT(g.value, WithinRel(loss_of_raw(raw, times, deltas, cens), 1e-12));

            const double h = 1e-5;
            auto check_entry = [&](Matrix& field, const Matrix& grads, std::size_t i, std::size_t k) {
                const double saved = field(i, k);
                field(i, k) = saved + h;
                const double up = loss_of_raw(raw, times, deltas, cens);
                field(i, k) = saved - h;
                const double dn = loss_of_raw(raw, times, deltas, cens);
                field(i, k) = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double analytic = grads(i, k);
                // Below 1e-7 the difference quotient is dominated by
                // cancellation noise, so only an absolute band is meaningful.
                if (std::abs(analytic) > 1e-7) {
                    CHECK_THAT(fd, WithinRel(analytic, 1e-4));
                } else {
                    CHECK_THAT(fd, WithinAbs(analytic, 1e-7));
                }
            };
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < p; ++k) {
                    check_entry(raw.beta_raw, g.grads.beta_raw, i, k);
                    check_entry(raw.eta_raw, g.grads.eta_raw, i, k);
                    if (p > 1) check_entry(raw.alpha_logits, g.grads.alpha_logits, i, k);
                }
        }
    }
}

TEST_CASE("p = 1 produces no classification gradients") {
    Rng rng(8);
    const HeadOutputs raw = random_raw(3, 1, rng);
    const NllGradients g = nll_gradients(raw, {1.0, 2.0, 0.5}, {1, 0, 1},
                                         CensoringSpec::per_observation());
    CHECK(g.grads.alpha_logits.rows() == 0);
    CHECK(g.grads.alpha_logits.cols() == 0);
}

TEST_CASE("hand-derived gradients at clean points") {
    // Event at t = 1 with beta = 2 exactly and eta = 1 up to rounding:
    // d(-LL)/dbeta_raw = -(1/beta + L(1-z)) * elu'(0) = -0.5, and the eta
    // gradient vanishes because z = 1.
    HeadOutputs raw;
    raw.beta_raw = Matrix(1, 1, 0.0);
    raw.eta_raw = Matrix(1, 1, std::log1p(-1e-4));
    NllGradients g = nll_gradients(raw, {1.0}, {1}, CensoringSpec::per_observation());
    CHECK_THAT(g.grads.beta_raw(0, 0), WithinRel(-0.5, 1e-12));
    CHECK_THAT(g.grads.eta_raw(0, 0), WithinAbs(0.0, 1e-12));

    // Exponential limit: with beta -> 1 the density loss is log(eta) + t/eta,
    // so d(-LL)/deta = 1/eta - t/eta^2, chained through the ELU derivative.
    raw.beta_raw(0, 0) = -30.0;  // elu saturates just above -1, beta ~ 1
    for (double t : {1.0, 2.0}) {
        g = nll_gradients(raw, {t}, {1}, CensoringSpec::per_observation());
        const double hand = (1.0 - t) * std::exp(raw.eta_raw(0, 0));
        CHECK_THAT(g.grads.eta_raw(0, 0), WithinAbs(hand, 1e-8));
    }

    // Censored at t = 2 with beta = 2, eta = 1.0001: the survival term gives
    // d(-LL)/dbeta = z L and d(-LL)/deta = -beta z / eta (raw eta = 0, so the
    // ELU derivative is 1).
    raw.beta_raw(0, 0) = 0.0;
    raw.eta_raw(0, 0) = 0.0;
    const double eta = 1.0 + 1e-4;
    const double z = std::pow(2.0 / eta, 2.0);
    const double L = std::log(2.0) - std::log(eta);
    g = nll_gradients(raw, {2.0}, {0}, CensoringSpec::per_observation());
    CHECK_THAT(g.grads.beta_raw(0, 0), WithinRel(z * L, 1e-12));
    CHECK_THAT(g.grads.eta_raw(0, 0), WithinRel(-2.0 * z / eta, 1e-12));
}

TEST_CASE("degenerate rows drive the loss to infinity without NaNs") {
    HeadOutputs raw;
    raw.beta_raw = Matrix(1, 1, 700.0);  // beta = 702, (t/eta)^beta overflows
    raw.eta_raw = Matrix(1, 1, 0.0);
    const NllGradients g = nll_gradients(raw, {3.0}, {1}, CensoringSpec::per_observation());
    CHECK(std::isinf(g.value));
    for (double v : g.grads.beta_raw.storage()) CHECK(!std::isnan(v));
    const double loss = loss_of_raw(raw, {3.0}, {1}, CensoringSpec::per_observation());
    CHECK(std::isinf(loss));
}
