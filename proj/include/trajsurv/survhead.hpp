#pragma once

#include <cstdint>
#include <vector>

#include "trajsurv/nn.hpp"
#include "trajsurv/tensor.hpp"

namespace trajsurv {

// Right-censored survival label. time_to_event is measured in hours from the
// last observation; event is 1 for an observed event, 0 for censoring.
struct SurvivalLabel {
  double time_to_event = 0.0;
  int event = 0;
};

struct RiskHeadParams {
  Ffn g_eta;  // R^{d_z} -> R

  static RiskHeadParams create(std::int64_t latent_dim, std::int64_t hidden, Rng& rng);
};

// r = G_eta(z_last); the hazard ratio is exp(r).
Tensor risk_score(const Tensor& z_last, const RiskHeadParams& params);

// Negative log Cox partial likelihood over a batch, with within-batch risk
// sets R(T_i) = {k : T_k >= T_i} and log-sum-exp stabilization. Batches with
// zero events contribute 0.
Tensor partial_likelihood_loss(const Tensor& risks,
                               const std::vector<SurvivalLabel>& labels);

// Smoothed pairwise ranking loss: (1/N_events) sum_i sum_{k in R(T_i)}
// sigmoid(r_k - r_i). As written the inner sum includes k = i, a constant
// 0.5 per event; include_self=false drops those terms.
Tensor ranking_loss(const Tensor& risks, const std::vector<SurvivalLabel>& labels,
                    bool include_self = true);

Tensor survival_loss(const Tensor& risks, const std::vector<SurvivalLabel>& labels,
                     bool ranking_include_self = true);

// Breslow step-function estimate of the cumulative baseline hazard.
struct BaselineHazard {
  std::vector<double> event_times;       // sorted unique
  std::vector<double> cumulative_hazard;  // Lambda_0 at those times

  double cumulative_at(double t) const;  // Lambda_0(t), 0 before first event
};

BaselineHazard breslow_baseline(const std::vector<double>& risks,
                                const std::vector<SurvivalLabel>& labels);

// S(t | r) = exp(-Lambda_0(t) * exp(r)); throws std::out_of_range for t < 0.
double predict_survival(double risk, const BaselineHazard& baseline, double t);

}  // namespace trajsurv
