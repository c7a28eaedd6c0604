#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "trajsurv/survhead.hpp"

namespace trajsurv {
namespace metrics {

// Product-limit survival curve. survival[k] is S at event_times[k]; the
// curve is right-continuous, S(t) = 1 before the first event time.
struct KMCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<std::int64_t> at_risk;
  std::vector<std::int64_t> events;

  double eval(double t) const;
  double eval_left(double t) const;  // S(t-), the left limit
};

KMCurve kaplan_meier(const std::vector<SurvivalLabel>& labels);

// Kaplan-Meier estimate of the censoring distribution G (event indicator
// flipped); used as the IPCW weight source.
KMCurve censoring_km(const std::vector<SurvivalLabel>& labels);

// IPCW concordance index truncated at tau. Comparable pairs are
// (i event, T_i < T_j, T_i <= tau) with pair weight 1/G(T_i)^2; tied risks
// count 0.5. Throws UndefinedMetricError when no comparable pair exists or a
// required weight is zero.
double c_index_ipcw(const std::vector<double>& risks,
                    const std::vector<SurvivalLabel>& train_labels,
                    const std::vector<SurvivalLabel>& test_labels, double tau);

// Time-dependent Brier score at horizon t with IPCW weights: G(T-) for
// observed events before t, G(t) for patients still at risk.
double brier_score(const std::vector<double>& surv_probs,
                   const std::vector<SurvivalLabel>& test_labels, double t,
                   const std::vector<SurvivalLabel>& train_labels);

// Cumulative/dynamic AUC at horizon t: cases are events with T <= t, controls
// have T > t; case weights 1/G(T_i), ties count 0.5.
double dynamic_auc(const std::vector<double>& risks,
                   const std::vector<SurvivalLabel>& train_labels,
                   const std::vector<SurvivalLabel>& test_labels, double t);

struct EvalReport {
  double c_index = 0.0;
  std::array<double, 3> brier{};
  double brier_mean = 0.0;
  std::array<double, 3> auc{};
  double auc_mean = 0.0;
  std::array<double, 3> eval_times{};
  std::int64_t n_patients = 0;
  std::int64_t n_events = 0;
};

// 25/50/75% quantiles of the observed follow-up times.
std::array<double, 3> follow_up_quartiles(const std::vector<SurvivalLabel>& labels);

// Metrics at the follow-up quartiles of the test split. surv_probs is
// n_test x 3 row-major: predicted S at each quartile time. The C-index is
// truncated at the last quartile.
EvalReport quartile_eval(const std::vector<double>& risks,
                         const std::vector<double>& surv_probs,
                         const std::vector<SurvivalLabel>& train_labels,
                         const std::vector<SurvivalLabel>& test_labels);

// Spearman rank correlation with average ranks for ties; nullopt when either
// input has zero rank variance.
std::optional<double> spearman(const std::vector<double>& x,
                               const std::vector<double>& y);

// Correlation between pairwise latent distances (L2) and pairwise label
// distances (L1) across patients observed at one time point. Requires at
// least 3 patients; undefined results are reported as missing.
std::optional<double> alignment_spearman(
    const std::vector<std::vector<double>>& latents,
    const std::vector<std::vector<double>>& labels);

struct CalibrationBin {
  double mean_predicted = 0.0;
  double km_observed = 0.0;
  std::int64_t count = 0;  // 0 marks an empty (missing) bin
};

// Patients bucketed into n_bins equal-width bins by predicted S(t); observed
// survival per bucket is the bucket's KM estimate at t.
std::vector<CalibrationBin> calibration_bins(const std::vector<double>& surv_probs,
                                             const std::vector<SurvivalLabel>& labels,
                                             double t, int n_bins);

}  // namespace metrics
}  // namespace trajsurv
