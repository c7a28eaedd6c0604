#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajsurv/tensor.hpp"

namespace trajsurv {

// Hourly severity labels: each row of s is the severity vector at that hour
// (overall score followed by component scores); v holds the corresponding
// trend vectors.
struct SeveritySeries {
  std::vector<double> hours;
  std::vector<std::vector<double>> s;
  std::vector<std::vector<double>> v;

  std::int64_t n_hours() const { return static_cast<std::int64_t>(hours.size()); }
  std::int64_t width() const {
    return s.empty() ? 0 : static_cast<std::int64_t>(s[0].size());
  }
  // Severity/trend at the nearest hour to t.
  std::size_t nearest_hour_index(double t) const;
};

// v_t = (s_{t+dt} - s_{t-dt}) / (2 dt) at interior hours, one-sided
// differences within dt of the boundaries. Series with fewer than two rows
// get v = 0.
std::vector<std::vector<double>> severity_trend(const std::vector<std::vector<double>>& s,
                                                std::int64_t delta_t_hours);

// d(a,b) = ||s_a - s_b||_1 + delta * ||v_a - v_b||_1
double label_distance(const std::vector<double>& s_a, const std::vector<double>& v_a,
                      const std::vector<double>& s_b, const std::vector<double>& v_b,
                      double delta);

// Phi(t_i, t_j; kappa2) = exp(-|t_i - t_j| / kappa2), in (0, 1].
double time_mask(double t_i, double t_j, double kappa2);

// One anchor latent state per observation time, across the patients of a
// batch, with its severity labels.
struct AnchorSet {
  std::vector<Tensor> states;               // each [d_z]
  std::vector<double> times;                // observation hours
  std::vector<std::vector<double>> s;       // severity vectors
  std::vector<std::vector<double>> v;       // trend vectors
  std::vector<std::int64_t> patient_ids;

  std::size_t size() const { return states.size(); }
};

// Time-aware contrastive objective (Rank-N-Contrast with an exponential
// time-interval mask). Fewer than two anchors yields 0 with a warning.
// With use_time_mask=false the mask is identically 1, recovering the plain
// rank-contrast objective.
Tensor tacl_loss(const AnchorSet& anchors, double kappa1, double kappa2, double delta,
                 bool use_time_mask = true);

// L = L_SURV + alpha * L_TACL
Tensor total_loss(const Tensor& l_surv, const Tensor& l_tacl, double alpha);

}  // namespace trajsurv
