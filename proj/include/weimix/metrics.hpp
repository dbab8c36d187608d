#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "weimix/dataio.hpp"
#include "weimix/errors.hpp"
#include "weimix/neuralnet.hpp"
#include "weimix/weibull.hpp"

namespace weimix {

struct EvaluationResult {
    double c_index = 0.0;
    std::size_t n_comparable_pairs = 0;
    std::size_t n_concordant = 0;
};

/// Concordance over all ordered pairs (i, j): the pair is comparable when
/// t_i > t_j and observation j is uncensored; it counts as concordant when
/// additionally pred_i > pred_j. All inequalities strict, so prediction ties
/// earn nothing. No comparable pairs is an error, never a silent 0.
inline EvaluationResult concordance_index(const std::vector<double>& times,
                                          const std::vector<double>& predictions,
                                          const std::vector<int>& deltas) {
    const std::size_t n = times.size();
    if (predictions.size() != n || deltas.size() != n)
        throw std::invalid_argument("concordance_index: input lengths differ");
    if (n < 2) throw std::invalid_argument("concordance_index: need at least 2 observations");
    for (int d : deltas)
        if (d != 0 && d != 1) throw std::invalid_argument("concordance_index: deltas must be 0 or 1");

    EvaluationResult r;
    for (std::size_t j = 0; j < n; ++j) {
        if (deltas[j] != 1) continue;
        for (std::size_t i = 0; i < n; ++i) {
            if (times[i] > times[j]) {
                ++r.n_comparable_pairs;
                if (predictions[i] > predictions[j]) ++r.n_concordant;
            }
        }
    }
    if (r.n_comparable_pairs == 0)
        throw UndefinedMetricError("concordance_index: no comparable pairs");
    r.c_index = static_cast<double>(r.n_concordant) / static_cast<double>(r.n_comparable_pairs);
    return r;
}

/// Per-row expected lifetime of the predicted mixture. x must already be
/// standardized with the scaler the model was trained with.
inline std::vector<double> predict_mean_lifetime(const NetworkModel& model, const Matrix& x) {
    const ForwardResult f = forward(model, x);
    std::vector<double> mu(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) mu[i] = mean_lifetime(f.params.row_mixture(i));
    return mu;
}

/// Per-row survival probability at the queried horizon.
inline std::vector<double> survival_at_horizon(const NetworkModel& model, const Matrix& x, double t_sth) {
    if (!std::isfinite(t_sth) || !(t_sth > 0.0))
        throw std::invalid_argument("survival_at_horizon: horizon must be positive");
    const ForwardResult f = forward(model, x);
    std::vector<double> s(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        s[i] = std::exp(mixture_log_survival(t_sth, f.params.row_mixture(i)));
    return s;
}

/// Which statistic orders observations in horizon_cindex. Survival
/// probability at the horizon is the default ranking.
enum class RankingStatistic { SurvivalAtHorizon, MeanLifetime };

/// C-index where predictions come from the model at a given horizon: higher
/// survival probability means a later predicted event.
inline EvaluationResult horizon_cindex(const NetworkModel& model, const Matrix& x,
                                       const std::vector<double>& times, const std::vector<int>& deltas,
                                       double t_sth,
                                       RankingStatistic stat = RankingStatistic::SurvivalAtHorizon) {
    const std::vector<double> preds = stat == RankingStatistic::SurvivalAtHorizon
                                          ? survival_at_horizon(model, x, t_sth)
                                          : predict_mean_lifetime(model, x);
    return concordance_index(times, preds, deltas);
}

/// Rebuild the event indicators against a new threshold: delta = 1 iff the
/// recorded time is strictly below t_c. Times are untouched, so the operation
/// is idempotent for a fixed t_c.
inline Dataset recensor(const Dataset& ds, double t_c) {
    if (!std::isfinite(t_c) || !(t_c > 0.0)) throw std::invalid_argument("recensor: t_c must be positive");
    Dataset out = ds;
    for (SurvivalRecord& rec : out.records) rec.delta = rec.time < t_c ? 1 : 0;
    return out;
}

}  // namespace weimix
