#pragma once

#include <cstdint>
#include <vector>

#include "trajsurv/errors.hpp"

namespace trajsurv {

// Per-feature standardization statistics, computed on the training split only.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8

  std::int64_t dim() const { return static_cast<std::int64_t>(mean.size()); }
};

// One patient's irregular observation sequence. Times are hours with
// times[0] == 0; values[j] is a fixed-width feature vector with a per-entry
// observed mask (0 = missing).
struct ObservationSeq {
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint8_t>> observed;

  std::int64_t n() const { return static_cast<std::int64_t>(times.size()); }
  std::int64_t dim() const {
    return values.empty() ? 0 : static_cast<std::int64_t>(values[0].size());
  }
  double t_end() const { return times.empty() ? 0.0 : times.back(); }
  bool fully_observed() const;
  void validate() const;  // strictly increasing times, times[0]==0, fixed width
};

// Two-rule imputation on standardized values: forward-fill within the
// patient, entries missing before the first observation set to 0 (the
// standardized mean). The stats argument is only used to validate the
// feature width; values are assumed already standardized.
ObservationSeq impute(const ObservationSeq& seq, const FeatureStats& train_stats);

enum class PathScheme { cubic_hermite_backward, rectilinear };

// Continuous control signal X(t) over [0, t_n] built from a fully observed
// sequence. Knots are the augmented points (x_j, t_j) in R^{d+1}; the last
// channel is the time channel, kept in raw hours.
//
// cubic_hermite_backward: slope at knot j is the backward difference
// (X_j - X_{j-1})/(t_j - t_{j-1}); the slope at knot 0 uses the first
// segment's one-sided difference, so a two-knot path degenerates to the
// straight line between its knots.
//
// rectilinear: each interval [t_j, t_{j+1}] splits at its midpoint; the
// first leg advances the time channel to t_{j+1} holding features at x_j,
// the second leg moves features to x_{j+1} holding the time channel.
// Derivatives at breakpoints use the right-sided convention.
class ControlPath {
 public:
  static ControlPath build(const ObservationSeq& seq, PathScheme scheme);

  std::int64_t channels() const { return dim_ + 1; }  // d features + time
  std::int64_t feature_dim() const { return dim_; }
  double t_end() const { return times_.back(); }
  PathScheme scheme() const { return scheme_; }
  const std::vector<double>& knot_times() const { return times_; }

  // Value and derivative at t in [0, t_n]; throws std::out_of_range outside.
  void eval(double t, double* x_out, double* dxdt_out) const;
  std::pair<std::vector<double>, std::vector<double>> eval(double t) const;

 private:
  PathScheme scheme_ = PathScheme::cubic_hermite_backward;
  std::int64_t dim_ = 0;
  std::vector<double> times_;
  std::vector<double> knots_;   // n x (d+1) row-major augmented values
  std::vector<double> slopes_;  // n x (d+1), cubic scheme only

  std::size_t segment_of(double t) const;
};

}  // namespace trajsurv
