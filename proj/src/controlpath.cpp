#include "trajsurv/controlpath.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace trajsurv {

bool ObservationSeq::fully_observed() const {
  for (const auto& row : observed) {
    for (auto o : row) {
      if (!o) return false;
    }
  }
  return true;
}

void ObservationSeq::validate() const {
  if (times.empty()) throw DataError("observation sequence is empty");
  if (times.front() != 0.0) {
    throw DataError("observation times must start at 0, got " +
                    std::to_string(times.front()));
  }
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) {
      throw DataError("observation times must be strictly increasing");
    }
  }
  if (values.size() != times.size() || observed.size() != times.size()) {
    throw DataError("observation sequence row counts disagree");
  }
  const std::size_t d = values.empty() ? 0 : values[0].size();
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (values[j].size() != d || observed[j].size() != d) {
      throw DataError("observation rows have inconsistent feature width");
    }
  }
}

ObservationSeq impute(const ObservationSeq& seq, const FeatureStats& train_stats) {
  seq.validate();
  if (seq.dim() != train_stats.dim()) {
    throw ConfigError("imputation stats width " + std::to_string(train_stats.dim()) +
                      " does not match sequence width " + std::to_string(seq.dim()));
  }
  ObservationSeq out = seq;
  const std::int64_t d = seq.dim();
  for (std::int64_t f = 0; f < d; ++f) {
    double last = 0.0;  // standardized mean before the first observation
    bool seen = false;
    for (std::size_t j = 0; j < out.times.size(); ++j) {
      if (out.observed[j][f]) {
        last = out.values[j][f];
        seen = true;
      } else {
        out.values[j][f] = seen ? last : 0.0;
        out.observed[j][f] = 1;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Hermite basis and derivatives on the unit interval.
inline void hermite_basis(double u, double& h00, double& h10, double& h01, double& h11) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
  h10 = u3 - 2.0 * u2 + u;
  h01 = -2.0 * u3 + 3.0 * u2;
  h11 = u3 - u2;
}

inline void hermite_basis_deriv(double u, double& d00, double& d10, double& d01,
                                double& d11) {
  const double u2 = u * u;
  d00 = 6.0 * u2 - 6.0 * u;
  d10 = 3.0 * u2 - 4.0 * u + 1.0;
  d01 = -6.0 * u2 + 6.0 * u;
  d11 = 3.0 * u2 - 2.0 * u;
}

}  // namespace

ControlPath ControlPath::build(const ObservationSeq& seq, PathScheme scheme) {
  seq.validate();
  if (!seq.fully_observed()) {
    throw DataError("control path requires a fully observed sequence; impute first");
  }
  ControlPath path;
  path.scheme_ = scheme;
  path.dim_ = seq.dim();
  path.times_ = seq.times;
  const std::int64_t n = seq.n();
  const std::int64_t c = path.dim_ + 1;
  path.knots_.resize(static_cast<std::size_t>(n * c));
  for (std::int64_t j = 0; j < n; ++j) {
    double* row = path.knots_.data() + j * c;
    std::copy(seq.values[j].begin(), seq.values[j].end(), row);
    row[c - 1] = seq.times[j];  // time channel
  }
  if (scheme == PathScheme::cubic_hermite_backward && n >= 2) {
    path.slopes_.assign(static_cast<std::size_t>(n * c), 0.0);
    for (std::int64_t j = 1; j < n; ++j) {
      const double dt = seq.times[j] - seq.times[j - 1];
      const double* prev = path.knots_.data() + (j - 1) * c;
      const double* cur = path.knots_.data() + j * c;
      double* m = path.slopes_.data() + j * c;
      for (std::int64_t k = 0; k < c; ++k) m[k] = (cur[k] - prev[k]) / dt;
    }
    // One-sided boundary slope at the first knot.
    std::copy(path.slopes_.begin() + c, path.slopes_.begin() + 2 * c,
              path.slopes_.begin());
  }
  return path;
}

std::size_t ControlPath::segment_of(double t) const {
  // Largest j with times_[j] <= t, capped so that j+1 is a valid knot.
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t j = static_cast<std::size_t>(it - times_.begin());
  if (j > 0) --j;
  if (j + 1 >= times_.size()) j = times_.size() - 2;
  return j;
}

void ControlPath::eval(double t, double* x_out, double* dxdt_out) const {
  const double t0 = times_.front();
  const double tn = times_.back();
  if (t < t0 || t > tn) {
    throw std::out_of_range("control path evaluated at t=" + std::to_string(t) +
                            " outside [" + std::to_string(t0) + "," +
                            std::to_string(tn) + "]");
  }
  const std::int64_t c = channels();
  if (times_.size() == 1) {
    // Single-knot degenerate path: constant on [0, 0].
    const double* k0 = knots_.data();
    for (std::int64_t k = 0; k < c; ++k) {
      x_out[k] = k0[k];
      dxdt_out[k] = 0.0;
    }
    return;
  }
  const std::size_t j = segment_of(t);
  const double ta = times_[j];
  const double tb = times_[j + 1];
  const double dt = tb - ta;
  const double* xa = knots_.data() + j * c;
  const double* xb = knots_.data() + (j + 1) * c;

  if (scheme_ == PathScheme::cubic_hermite_backward) {
    const double u = (t - ta) / dt;
    double h00, h10, h01, h11, d00, d10, d01, d11;
    hermite_basis(u, h00, h10, h01, h11);
    hermite_basis_deriv(u, d00, d10, d01, d11);
    const double* ma = slopes_.data() + j * c;
    const double* mb = slopes_.data() + (j + 1) * c;
    for (std::int64_t k = 0; k < c; ++k) {
      x_out[k] = h00 * xa[k] + h01 * xb[k] + dt * (h10 * ma[k] + h11 * mb[k]);
      dxdt_out[k] = (d00 * xa[k] + d01 * xb[k]) / dt + d10 * ma[k] + d11 * mb[k];
    }
    return;
  }

  // Rectilinear: time-advance leg on [ta, mid), feature leg on [mid, tb].
  const double mid = 0.5 * (ta + tb);
  if (t < mid) {
    for (std::int64_t k = 0; k < c - 1; ++k) {
      x_out[k] = xa[k];
      dxdt_out[k] = 0.0;
    }
    x_out[c - 1] = ta + 2.0 * (t - ta);
    dxdt_out[c - 1] = 2.0;
  } else {
    const double u = (t - mid) / (tb - mid);
    for (std::int64_t k = 0; k < c - 1; ++k) {
      x_out[k] = xa[k] + u * (xb[k] - xa[k]);
      dxdt_out[k] = (xb[k] - xa[k]) / (tb - mid);
    }
    x_out[c - 1] = tb;
    dxdt_out[c - 1] = 0.0;
  }
}

std::pair<std::vector<double>, std::vector<double>> ControlPath::eval(double t) const {
  std::vector<double> x(static_cast<std::size_t>(channels()));
  std::vector<double> d(static_cast<std::size_t>(channels()));
  eval(t, x.data(), d.data());
  return {std::move(x), std::move(d)};
}

}  // namespace trajsurv
