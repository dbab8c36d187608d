#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "weimix/rng.hpp"
#include "weimix/weibull.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace weimix;

namespace {

// Scalar arithmetic oracle values, computed once with a high-precision
// calculator and frozen here.
constexpr double kMixLogSurvT2 = -1.5842647781563713;   // log(0.7 e^-2 + 0.3 e^-1)
constexpr double kMixLogDensT1 = -0.98260222037465701;  // log(0.7 e^-1 + 0.3*0.5*e^-0.25)
constexpr double kGammaHalf = 1.7724538509055160;       // sqrt(pi)
constexpr double kGammaThreeHalves = 0.88622692545275801;

MixtureParams example_mixture() {
    return MixtureParams::make({0.7, 0.3}, {1.0, 2.0}, {1.0, 2.0});
}

}  // namespace

TEST_CASE("log_survival collapses at t = eta") {
    CHECK(log_survival(1.0, {2.0, 1.0}) == -1.0);
    CHECK(log_survival(2.0, {1.0, 1.0}) == -2.0);
    CHECK(log_survival(3.0, {2.0, 3.0}) == -1.0);
}

TEST_CASE("log_survival is strictly decreasing and vanishes at t -> 0") {
    const WeibullParams w{1.7, 2.3};
    double prev = log_survival(1e-6, w);
    for (double t = 0.1; t < 8.0; t += 0.1) {
        const double cur = log_survival(t, w);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK(log_survival(1e-12, w) > -1e-9);
    CHECK(log_survival(1e-12, w) <= 0.0);
}

TEST_CASE("log_density closed-form values") {
    CHECK(log_density(1.0, {1.0, 1.0}) == -1.0);
    CHECK_THAT(log_density(1.0, {2.0, 1.0}), WithinRel(-0.30685281944005469, 1e-15));
    // t = eta collapses to log beta - log eta - 1 for any parameters.
    for (double beta : {1.0, 1.5, 3.0}) {
        for (double eta : {0.5, 1.0, 4.0}) {
            CHECK_THAT(log_density(eta, {beta, eta}),
                       WithinRel(std::log(beta) - std::log(eta) - 1.0, 1e-13));
        }
    }
}

TEST_CASE("domain errors on bad times and parameters") {
    CHECK_THROWS_AS(log_survival(0.0, {2.0, 1.0}), std::domain_error);
    CHECK_THROWS_AS(log_survival(-1.0, {2.0, 1.0}), std::domain_error);
    CHECK_THROWS_AS(log_density(std::numeric_limits<double>::infinity(), {2.0, 1.0}),
                    std::domain_error);
    CHECK_THROWS_AS(log_survival(1.0, {0.5, 1.0}), std::domain_error);  // beta < 1
    CHECK_THROWS_AS(log_survival(1.0, {2.0, 0.0}), std::domain_error);  // eta <= 0
    MixtureParams bad = MixtureParams::make({0.6, 0.3}, {1.0, 2.0}, {1.0, 2.0});
    CHECK_THROWS_AS(bad.validate(), std::domain_error);  // weights sum to 0.9
    MixtureParams empty;
    CHECK_THROWS_AS(empty.validate(), std::domain_error);
}

TEST_CASE("single-component mixtures reduce bitwise") {
    const MixtureParams m = MixtureParams::single(2.7, 1.9);
    for (double t : {0.2, 1.0, 3.5, 11.0}) {
        CHECK(mixture_log_survival(t, m) == log_survival(t, m.components[0].params));
        CHECK(mixture_log_density(t, m) == log_density(t, m.components[0].params));
    }
}

TEST_CASE("identical components behave like one component") {
    const MixtureParams m = MixtureParams::make({0.5, 0.5}, {1.0, 1.0}, {1.0, 1.0});
    CHECK_THAT(mixture_log_survival(1.0, m), WithinRel(-1.0, 1e-12));
    CHECK_THAT(mixture_log_density(1.0, m), WithinRel(log_density(1.0, {1.0, 1.0}), 1e-12));
}

TEST_CASE("two-component oracle values") {
    const MixtureParams m = example_mixture();
    CHECK_THAT(mixture_log_survival(2.0, m), WithinRel(kMixLogSurvT2, 1e-13));
    CHECK_THAT(mixture_log_density(1.0, m), WithinRel(kMixLogDensT1, 1e-13));
}

TEST_CASE("mixture with one zero weight equals the surviving component") {
    const MixtureParams m = MixtureParams::make({1.0, 0.0}, {2.0, 3.0}, {1.5, 9.0});
    CHECK_THAT(mixture_log_survival(2.0, m), WithinRel(log_survival(2.0, {2.0, 1.5}), 1e-13));
    CHECK_THAT(mixture_log_density(2.0, m), WithinRel(log_density(2.0, {2.0, 1.5}), 1e-13));
}

TEST_CASE("log-sum-exp survives components that would overflow a naive sum") {
    // (t/eta)^beta is astronomically negative in the exponent for the first
    // component; the mixture must still equal the dominating second one.
    const MixtureParams m = MixtureParams::make({0.5, 0.5}, {40.0, 2.0}, {0.01, 5.0});
    const double v = mixture_log_survival(50.0, m);
    CHECK(std::isfinite(v));
    CHECK_THAT(v, WithinRel(std::log(0.5) + log_survival(50.0, {2.0, 5.0}), 1e-10));
}

TEST_CASE("density integrates to the mass complement of survival") {
    const MixtureParams m = MixtureParams::make({0.6, 0.4}, {2.0, 1.5}, {1.0, 3.0});
    const double t_max = 20.0;  // S(t_max) ~ 1e-8, far past 99.99% mass
    const std::size_t steps = 400000;
    const double h = t_max / static_cast<double>(steps);
    double integral = 0.0;
    double f_prev = 0.0;  // density -> 0 as t -> 0 for beta > 1
    for (std::size_t i = 1; i <= steps; ++i) {
        const double t = h * static_cast<double>(i);
        const double f = std::exp(mixture_log_density(t, m));
        integral += 0.5 * (f_prev + f) * h;
        f_prev = f;
    }
    const double mass = 1.0 - std::exp(mixture_log_survival(t_max, m));
    CHECK_THAT(integral, WithinAbs(mass, 1e-6));
}

TEST_CASE("mean lifetime identities") {
    CHECK(mean_lifetime(MixtureParams::single(1.0, 3.0)) == 3.0);
    CHECK_THAT(mean_lifetime(MixtureParams::single(2.0, 1.0)), WithinRel(kGammaThreeHalves, 1e-14));
    CHECK(mean_lifetime(MixtureParams::make({0.5, 0.5}, {1.0, 1.0}, {2.0, 2.0})) == 2.0);
    CHECK_THAT(kGammaHalf / 2.0, WithinRel(kGammaThreeHalves, 1e-15));  // internal consistency
}

TEST_CASE("mean lifetime is linear in the components") {
    Rng rng(91);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = 2 + rng.below(3);
        std::vector<double> alphas(p), betas(p), etas(p);
        double sum = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
            alphas[k] = 0.05 + rng.uniform01();
            sum += alphas[k];
            betas[k] = 1.0 + 4.0 * rng.uniform01();
            etas[k] = 0.2 + 5.0 * rng.uniform01();
        }
        for (double& a : alphas) a /= sum;
        const MixtureParams m = MixtureParams::make(alphas, betas, etas);
        double expected = 0.0;
        for (std::size_t k = 0; k < p; ++k)
            expected += alphas[k] * mean_lifetime(MixtureParams::single(betas[k], etas[k]));
        CHECK_THAT(mean_lifetime(m), WithinRel(expected, 1e-12));
    }
}

TEST_CASE("inverse-transform sampling hits forced values") {
    CHECK_THAT(sample_time({2.0, 3.0}, std::exp(-1.0)), WithinRel(3.0, 1e-14));
    CHECK_THROWS_AS(sample_time({2.0, 3.0}, 0.0), std::domain_error);
    CHECK_THROWS_AS(sample_time({2.0, 3.0}, 1.0), std::domain_error);
}

TEST_CASE("a zero-weight component is never sampled") {
    const MixtureParams m = MixtureParams::make({1.0, 0.0}, {2.0, 5.0}, {1.0, 1000.0});
    Rng rng(7);
    for (int i = 0; i < 200; ++i) CHECK(sample(m, rng) < 100.0);
}

TEST_CASE("sampled draws match the analytic distribution") {
    const MixtureParams m = MixtureParams::single(2.0, 1.0);
    Rng rng(12345);
    const std::size_t n = 100000;
    std::vector<double> draws(n);
    for (double& d : draws) d = sample(m, rng);
    std::sort(draws.begin(), draws.end());

    // Kolmogorov-Smirnov distance against F(t) = 1 - exp(-t^2).
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double cdf = -std::expm1(-draws[i] * draws[i]);
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        ks = std::max(ks, std::max(cdf - lo, hi - cdf));
    }
    CHECK(ks < 0.01);
}

TEST_CASE("empirical mean of many draws matches mean_lifetime") {
    const MixtureParams m = MixtureParams::make({0.4, 0.6}, {2.0, 1.5}, {1.0, 2.0});
    Rng rng(777);
    const std::size_t n = 1000000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = sample(m, rng);
        sum += t;
        sum_sq += t * t;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - mean * mean;
    const double se = std::sqrt(var / static_cast<double>(n));
    CHECK(std::abs(mean - mean_lifetime(m)) < 3.0 * se);
}
