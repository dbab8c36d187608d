#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "weimix/metrics.hpp"
#include "weimix/rng.hpp"
#include "weimix/synthgen.hpp"

using Catch::Matchers::WithinRel;
using namespace weimix;

namespace {

// Independent pairwise enumerator: sum of indicator products over every
// ordered pair, written without the early-continue structure of the
// production loop.
EvaluationResult brute_force_cindex(const std::vector<double>& t, const std::vector<double>& pred,
                                    const std::vector<int>& d) {
    EvaluationResult r;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            const int comparable = (d[j] == 1 && t[i] > t[j]) ? 1 : 0;
            r.n_comparable_pairs += comparable;
            r.n_concordant += comparable * ((pred[i] > pred[j]) ? 1 : 0);
        }
    if (r.n_comparable_pairs == 0) throw UndefinedMetricError("no comparable pairs");
    r.c_index = static_cast<double>(r.n_concordant) / static_cast<double>(r.n_comparable_pairs);
    return r;
}

NetworkModel tiny_model(std::size_t d, std::size_t p, std::uint64_t seed) {
    Architecture arch;
    arch.input_dim = d;
    arch.p = p;
    arch.trunk = {8, 6, 5};
    arch.head = {4, 3};
    Rng rng(seed);
    return make_model(arch, rng);
}

}  // namespace

TEST_CASE("three-observation concordance example") {
    const EvaluationResult r = concordance_index({1.0, 2.0, 3.0}, {0.5, 2.0, 0.1}, {1, 0, 1});
    CHECK(r.n_comparable_pairs == 2);
    CHECK(r.n_concordant == 1);
    CHECK(r.c_index == 0.5);
}

TEST_CASE("perfect and inverted rankings hit the endpoints") {
    const std::vector<double> t = {1.0, 2.0, 3.0, 4.0};
    const std::vector<int> d = {1, 1, 1, 1};
    CHECK(concordance_index(t, {1.0, 2.0, 3.0, 4.0}, d).c_index == 1.0);
    CHECK(concordance_index(t, {4.0, 3.0, 2.0, 1.0}, d).c_index == 0.0);
    // Prediction ties are never concordant.
    CHECK(concordance_index(t, {7.0, 7.0, 7.0, 7.0}, d).c_index == 0.0);
}

TEST_CASE("pairs need an uncensored earlier observation") {
    // The only event has the latest time, so nothing is comparable.
    CHECK_THROWS_AS(concordance_index({1.0, 2.0}, {0.1, 0.2}, {0, 1}), UndefinedMetricError);
    CHECK_THROWS_AS(concordance_index({1.0, 2.0}, {0.1, 0.2}, {0, 0}), UndefinedMetricError);
    // Tied times are not comparable either (strict inequality).
    CHECK_THROWS_AS(concordance_index({2.0, 2.0}, {0.1, 0.2}, {1, 1}), UndefinedMetricError);

    CHECK_THROWS_AS(concordance_index({1.0}, {0.1}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(concordance_index({1.0, 2.0}, {0.1}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(concordance_index({1.0, 2.0}, {0.1, 0.2}, {1, 2}), std::invalid_argument);
}

TEST_CASE("concordance agrees with a brute-force enumerator on tied data") {
    Rng rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 5 + rng.below(60);
        std::vector<double> t(n), pred(n);
        std::vector<int> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = 1.0 + static_cast<double>(rng.below(8));     // heavy time ties
            pred[i] = 0.25 * static_cast<double>(rng.below(6)); // heavy prediction ties
            d[i] = rng.uniform01() < 0.6 ? 1 : 0;
        }
        bool ours_threw = false, brute_threw = false;
        EvaluationResult ours{}, brute{};
        try {
            ours = concordance_index(t, pred, d);
        } catch (const UndefinedMetricError&) {
            ours_threw = true;
        }
        try {
            brute = brute_force_cindex(t, pred, d);
        } catch (const UndefinedMetricError&) {
            brute_threw = true;
        }
        REQUIRE(ours_threw == brute_threw);
        if (!ours_threw) {
            CHECK(ours.n_comparable_pairs == brute.n_comparable_pairs);
            CHECK(ours.n_concordant == brute.n_concordant);
            CHECK(ours.c_index == brute.c_index);
        }
    }
}

TEST_CASE("model-based predictions compose the documented primitives") {
    NetworkModel model = tiny_model(2, 2, 5);
    Matrix x(3, 2);
    Rng rng(6);
    for (double& v : x.storage()) v = 2.0 * rng.uniform01() - 1.0;

    const ForwardResult f = forward(model, x);
    const std::vector<double> mu = predict_mean_lifetime(model, x);
    const std::vector<double> s = survival_at_horizon(model, x, 1.25);
    REQUIRE(mu.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(mu[i] == mean_lifetime(f.params.row_mixture(i)));
        CHECK(s[i] == std::exp(mixture_log_survival(1.25, f.params.row_mixture(i))));
        CHECK(s[i] > 0.0);
        CHECK(s[i] < 1.0);
        CHECK(mu[i] > 0.0);
    }

    CHECK_THROWS_AS(survival_at_horizon(model, x, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(survival_at_horizon(model, x, -1.0), std::invalid_argument);

    const std::vector<double> times = {1.0, 2.0, 3.0};
    const std::vector<int> deltas = {1, 1, 0};
    const EvaluationResult via_horizon =
        horizon_cindex(model, x, times, deltas, 1.25, RankingStatistic::SurvivalAtHorizon);
    CHECK(via_horizon.c_index == concordance_index(times, s, deltas).c_index);
    const EvaluationResult via_mu =
        horizon_cindex(model, x, times, deltas, 1.25, RankingStatistic::MeanLifetime);
    CHECK(via_mu.c_index == concordance_index(times, mu, deltas).c_index);
}

TEST_CASE("recensoring rewrites indicators against the new threshold only") {
    Dataset ds;
    ds.feature_names = {"x"};
    ds.qualitative_mask = {false};
    for (double t : {1.0, 2.0, 3.0, 4.0}) {
        SurvivalRecord r;
        r.features = {t};
        r.time = t;
        r.delta = 0;  // deliberately wrong; recensor must overwrite
        ds.records.push_back(r);
    }

    const Dataset at25 = recensor(ds, 2.5);
    CHECK(at25.deltas() == std::vector<int>{1, 1, 0, 0});
    CHECK(at25.times() == ds.times());

    // A time exactly at the threshold counts as censored (strictly below).
    const Dataset at3 = recensor(ds, 3.0);
    CHECK(at3.deltas() == std::vector<int>{1, 1, 0, 0});

    // Idempotent for a fixed threshold and non-destructive on the input.
    CHECK(recensor(at3, 3.0) == at3);
    CHECK(ds.deltas() == std::vector<int>{0, 0, 0, 0});

    CHECK_THROWS_AS(recensor(ds, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(recensor(ds, -1.0), std::invalid_argument);
}

TEST_CASE("a trained model ranks a learnable problem above chance at the median horizon") {
    GeneratorSpec gspec;
    gspec.function_id = GenFunction::Linear;
    gspec.p = 1;
    gspec.n = 360;
    gspec.censor_fraction = 0.3;
    gspec.seed = 515;
    const SynthData sd = generate(gspec);

    const FoldPlan plan = make_folds(sd.dataset.n(), 4, 0.2, 11);
    const Dataset train_ds = sd.dataset.subset(plan.train_idx[0]);
    const Dataset val_ds = sd.dataset.subset(plan.val_idx[0]);
    const Dataset test_ds = sd.dataset.subset(plan.test_idx[0]);
    const ScalerStats scaler = fit_scaler(train_ds);

    TrainingData tr;
    tr.x = apply_scaler(scaler, train_ds).feature_matrix();
    tr.times = train_ds.times();
    tr.deltas = train_ds.deltas();
    tr.censoring = sd.censoring;
    TrainingData val;
    val.x = apply_scaler(scaler, val_ds).feature_matrix();
    val.times = val_ds.times();
    val.deltas = val_ds.deltas();
    val.censoring = sd.censoring;

    TrainConfig cfg;
    cfg.p = 1;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 64;
    cfg.max_epochs = 120;
    cfg.patience = 20;
    cfg.seed = 2;
    const TrainResult res = train(tr, val, cfg);

    std::vector<double> sorted_times = test_ds.times();
    std::sort(sorted_times.begin(), sorted_times.end());
    const double median = sorted_quantile(sorted_times, 0.5);

    const Matrix xt = apply_scaler(scaler, test_ds).feature_matrix();
    const EvaluationResult r =
        horizon_cindex(res.model, xt, test_ds.times(), test_ds.deltas(), median);
    CHECK(r.c_index > 0.6);
}
