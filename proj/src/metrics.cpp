#include "trajsurv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "trajsurv/errors.hpp"

namespace trajsurv {
namespace metrics {

double KMCurve::eval(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

double KMCurve::eval_left(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

namespace {

KMCurve product_limit(const std::vector<SurvivalLabel>& labels, bool flip) {
  if (labels.empty()) throw std::invalid_argument("kaplan_meier: empty cohort");
  std::vector<double> times;
  for (const auto& l : labels) {
    const int ev = flip ? 1 - l.event : l.event;
    if (ev) times.push_back(l.time_to_event);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  KMCurve km;
  double s = 1.0;
  for (double te : times) {
    std::int64_t n_e = 0, d_e = 0;
    for (const auto& l : labels) {
      if (l.time_to_event >= te) ++n_e;
      const int ev = flip ? 1 - l.event : l.event;
      if (ev && l.time_to_event == te) ++d_e;
    }
    s *= 1.0 - static_cast<double>(d_e) / static_cast<double>(n_e);
    km.times.push_back(te);
    km.survival.push_back(s);
    km.at_risk.push_back(n_e);
    km.events.push_back(d_e);
  }
  return km;
}

}  // namespace

KMCurve kaplan_meier(const std::vector<SurvivalLabel>& labels) {
  return product_limit(labels, false);
}

KMCurve censoring_km(const std::vector<SurvivalLabel>& labels) {
  return product_limit(labels, true);
}

double c_index_ipcw(const std::vector<double>& risks,
                    const std::vector<SurvivalLabel>& train_labels,
                    const std::vector<SurvivalLabel>& test_labels, double tau) {
  if (risks.size() != test_labels.size()) {
    throw std::invalid_argument("c_index_ipcw: risk/label count mismatch");
  }
  const KMCurve g = censoring_km(train_labels);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    if (!test_labels[i].event) continue;
    const double ti = test_labels[i].time_to_event;
    if (ti > tau) continue;
    const double gi = g.eval(ti);
    if (gi <= 0.0) {
      throw UndefinedMetricError("c_index_ipcw: censoring survival is 0 at t=" +
                                 std::to_string(ti));
    }
    const double w = 1.0 / (gi * gi);
    for (std::size_t j = 0; j < test_labels.size(); ++j) {
      if (j == i || !(test_labels[j].time_to_event > ti)) continue;
      den += w;
      if (risks[i] > risks[j]) {
        num += w;
      } else if (risks[i] == risks[j]) {
        num += 0.5 * w;
      }
    }
  }
  if (den == 0.0) {
    throw UndefinedMetricError("c_index_ipcw: no comparable pairs below tau");
  }
  return num / den;
}

double brier_score(const std::vector<double>& surv_probs,
                   const std::vector<SurvivalLabel>& test_labels, double t,
                   const std::vector<SurvivalLabel>& train_labels) {
  if (surv_probs.size() != test_labels.size()) {
    throw std::invalid_argument("brier_score: prediction/label count mismatch");
  }
  const KMCurve g = censoring_km(train_labels);
  const double gt = g.eval(t);
  double total = 0.0;
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    const double ti = test_labels[i].time_to_event;
    const double s_hat = surv_probs[i];
    if (ti <= t && test_labels[i].event) {
      const double gi = g.eval_left(ti);
      if (gi <= 0.0) {
        throw UndefinedMetricError("brier_score: censoring weight undefined at t=" +
                                   std::to_string(ti));
      }
      total += s_hat * s_hat / gi;
    } else if (ti > t) {
      if (gt <= 0.0) {
        throw UndefinedMetricError("brier_score: censoring weight undefined at horizon");
      }
      total += (1.0 - s_hat) * (1.0 - s_hat) / gt;
    }
  }
  return total / static_cast<double>(test_labels.size());
}

double dynamic_auc(const std::vector<double>& risks,
                   const std::vector<SurvivalLabel>& train_labels,
                   const std::vector<SurvivalLabel>& test_labels, double t) {
  if (risks.size() != test_labels.size()) {
    throw std::invalid_argument("dynamic_auc: risk/label count mismatch");
  }
  const KMCurve g = censoring_km(train_labels);
  std::vector<std::size_t> cases, controls;
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    if (test_labels[i].event && test_labels[i].time_to_event <= t) {
      cases.push_back(i);
    } else if (test_labels[i].time_to_event > t) {
      controls.push_back(i);
    }
  }
  if (cases.empty() || controls.empty()) {
    throw UndefinedMetricError("dynamic_auc: needs at least one case and one control");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i : cases) {
    const double gi = g.eval(test_labels[i].time_to_event);
    if (gi <= 0.0) {
      throw UndefinedMetricError("dynamic_auc: censoring weight undefined");
    }
    const double w = 1.0 / gi;
    for (std::size_t j : controls) {
      den += w;
      if (risks[i] > risks[j]) {
        num += w;
      } else if (risks[i] == risks[j]) {
        num += 0.5 * w;
      }
    }
  }
  return num / den;
}

std::array<double, 3> follow_up_quartiles(const std::vector<SurvivalLabel>& labels) {
  if (labels.empty()) throw std::invalid_argument("follow_up_quartiles: empty cohort");
  std::vector<double> times;
  times.reserve(labels.size());
  for (const auto& l : labels) times.push_back(l.time_to_event);
  std::sort(times.begin(), times.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(times.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, times.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return times[lo] + frac * (times[hi] - times[lo]);
  };
  return {quantile(0.25), quantile(0.5), quantile(0.75)};
}

EvalReport quartile_eval(const std::vector<double>& risks,
                         const std::vector<double>& surv_probs,
                         const std::vector<SurvivalLabel>& train_labels,
                         const std::vector<SurvivalLabel>& test_labels) {
  const std::size_t n = test_labels.size();
  if (surv_probs.size() != n * 3) {
    throw std::invalid_argument("quartile_eval: surv_probs must be n_test x 3");
  }
  EvalReport rep;
  rep.eval_times = follow_up_quartiles(test_labels);
  rep.n_patients = static_cast<std::int64_t>(n);
  for (const auto& l : test_labels) rep.n_events += l.event;
  rep.c_index = c_index_ipcw(risks, train_labels, test_labels, rep.eval_times[2]);
  for (int q = 0; q < 3; ++q) {
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) probs[i] = surv_probs[i * 3 + q];
    rep.brier[q] = brier_score(probs, test_labels, rep.eval_times[q], train_labels);
    rep.auc[q] = dynamic_auc(risks, train_labels, test_labels, rep.eval_times[q]);
  }
  rep.brier_mean = (rep.brier[0] + rep.brier[1] + rep.brier[2]) / 3.0;
  rep.auc_mean = (rep.auc[0] + rep.auc[1] + rep.auc[2]) / 3.0;
  return rep;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x,
                               const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> alignment_spearman(
    const std::vector<std::vector<double>>& latents,
    const std::vector<std::vector<double>>& labels) {
  if (latents.size() != labels.size()) {
    throw std::invalid_argument("alignment_spearman: patient count mismatch");
  }
  if (latents.size() < 3) return std::nullopt;
  std::vector<double> dz, dl;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    for (std::size_t j = i + 1; j < latents.size(); ++j) {
      double s2 = 0.0;
      for (std::size_t k = 0; k < latents[i].size(); ++k) {
        const double d = latents[i][k] - latents[j][k];
        s2 += d * d;
      }
      dz.push_back(std::sqrt(s2));
      double l1 = 0.0;
      for (std::size_t k = 0; k < labels[i].size(); ++k) {
        l1 += std::abs(labels[i][k] - labels[j][k]);
      }
      dl.push_back(l1);
    }
  }
  return spearman(dz, dl);
}

std::vector<CalibrationBin> calibration_bins(const std::vector<double>& surv_probs,
                                             const std::vector<SurvivalLabel>& labels,
                                             double t, int n_bins) {
  if (surv_probs.size() != labels.size()) {
    throw std::invalid_argument("calibration_bins: prediction/label count mismatch");
  }
  if (n_bins < 1) throw std::invalid_argument("calibration_bins: n_bins must be >= 1");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_bins));
  for (std::size_t i = 0; i < surv_probs.size(); ++i) {
    int b = static_cast<int>(surv_probs[i] * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    members[static_cast<std::size_t>(b)].push_back(i);
  }
  std::vector<CalibrationBin> bins(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    const auto& ms = members[static_cast<std::size_t>(b)];
    auto& bin = bins[static_cast<std::size_t>(b)];
    bin.count = static_cast<std::int64_t>(ms.size());
    if (ms.empty()) continue;
    double mp = 0.0;
    std::vector<SurvivalLabel> sub;
    for (auto i : ms) {
      mp += surv_probs[i];
      sub.push_back(labels[i]);
    }
    bin.mean_predicted = mp / static_cast<double>(ms.size());
    bin.km_observed = kaplan_meier(sub).eval(t);
  }
  return bins;
}

}  // namespace metrics
}  // namespace trajsurv
