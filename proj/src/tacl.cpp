#include "trajsurv/tacl.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace trajsurv {

std::size_t SeveritySeries::nearest_hour_index(double t) const {
  if (hours.empty()) throw std::invalid_argument("severity series is empty");
  std::size_t best = 0;
  double best_d = std::abs(hours[0] - t);
  for (std::size_t i = 1; i < hours.size(); ++i) {
    const double d = std::abs(hours[i] - t);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<std::vector<double>> severity_trend(const std::vector<std::vector<double>>& s,
                                                std::int64_t delta_t_hours) {
  if (delta_t_hours < 1) throw std::invalid_argument("severity_trend: delta_t >= 1");
  const std::int64_t n = static_cast<std::int64_t>(s.size());
  if (n == 0) return {};
  const std::size_t w = s[0].size();
  std::vector<std::vector<double>> v(static_cast<std::size_t>(n),
                                     std::vector<double>(w, 0.0));
  if (n < 2) return v;
  const std::int64_t dt = delta_t_hours;
  for (std::int64_t t = 0; t < n; ++t) {
    std::int64_t lo, hi;
    if (t - dt >= 0 && t + dt < n) {
      lo = t - dt;
      hi = t + dt;
    } else if (t + dt < n) {
      lo = t;  // forward one-sided near the start
      hi = t + dt;
    } else if (t - dt >= 0) {
      lo = t - dt;  // backward one-sided near the end
      hi = t;
    } else {
      lo = 0;  // short series: widest available span
      hi = n - 1;
    }
    const double span = static_cast<double>(hi - lo);
    for (std::size_t k = 0; k < w; ++k) {
      v[t][k] = (s[hi][k] - s[lo][k]) / span;
    }
  }
  return v;
}

double label_distance(const std::vector<double>& s_a, const std::vector<double>& v_a,
                      const std::vector<double>& s_b, const std::vector<double>& v_b,
                      double delta) {
  if (s_a.size() != s_b.size() || v_a.size() != v_b.size()) {
    throw std::invalid_argument("label_distance: label dimensionality mismatch");
  }
  double d = 0.0;
  for (std::size_t k = 0; k < s_a.size(); ++k) d += std::abs(s_a[k] - s_b[k]);
  for (std::size_t k = 0; k < v_a.size(); ++k) d += delta * std::abs(v_a[k] - v_b[k]);
  return d;
}

double time_mask(double t_i, double t_j, double kappa2) {
  if (!(kappa2 > 0.0)) throw std::invalid_argument("time_mask: kappa2 must be > 0");
  return std::exp(-std::abs(t_i - t_j) / kappa2);
}

Tensor tacl_loss(const AnchorSet& anchors, double kappa1, double kappa2, double delta,
                 bool use_time_mask) {
  const std::size_t m = anchors.size();
  if (m < 2) {
    std::fprintf(stderr, "warning: tacl_loss called with %zu anchor(s); returning 0\n", m);
    return Tensor::scalar(0.0);
  }
  std::vector<double> ld(m * m, 0.0);
  std::vector<double> mask(m * m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      ld[i * m + j] =
          label_distance(anchors.s[i], anchors.v[i], anchors.s[j], anchors.v[j], delta);
      if (use_time_mask) {
        mask[i * m + j] = time_mask(anchors.times[i], anchors.times[j], kappa2);
      }
    }
  }
  return tacl_pairwise_loss(stack_rows(anchors.states), ld, mask, kappa1);
}

Tensor total_loss(const Tensor& l_surv, const Tensor& l_tacl, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("total_loss: alpha must be >= 0");
  return add(l_surv, scale(l_tacl, alpha));
}

}  // namespace trajsurv
