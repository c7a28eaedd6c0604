#include "trajsurv/survhead.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajsurv {

RiskHeadParams RiskHeadParams::create(std::int64_t latent_dim, std::int64_t hidden,
                                      Rng& rng) {
  RiskHeadParams p;
  p.g_eta = Ffn::create({latent_dim, hidden, 1}, rng);
  return p;
}

Tensor risk_score(const Tensor& z_last, const RiskHeadParams& params) {
  return params.g_eta.forward(z_last);
}

namespace {

std::vector<std::int64_t> risk_set(const std::vector<SurvivalLabel>& labels, double t) {
  std::vector<std::int64_t> idx;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].time_to_event >= t) idx.push_back(static_cast<std::int64_t>(k));
  }
  return idx;
}

void check_batch(const Tensor& risks, const std::vector<SurvivalLabel>& labels) {
  if (labels.empty()) throw std::invalid_argument("survival loss on an empty batch");
  if (risks.numel() != static_cast<std::int64_t>(labels.size())) {
    throw std::invalid_argument("risk count " + std::to_string(risks.numel()) +
                                " does not match label count " +
                                std::to_string(labels.size()));
  }
}

}  // namespace

Tensor partial_likelihood_loss(const Tensor& risks,
                               const std::vector<SurvivalLabel>& labels) {
  check_batch(risks, labels);
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].event) continue;
    const auto rset = risk_set(labels, labels[i].time_to_event);
    Tensor r_i = gather(risks, {static_cast<std::int64_t>(i)});
    Tensor lse = logsumexp(gather(risks, rset));
    terms.push_back(sub(r_i, lse));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor total = reduce_sum(flatten(stack_rows(terms)));
  return scale(total, -1.0 / static_cast<double>(terms.size()));
}

Tensor ranking_loss(const Tensor& risks, const std::vector<SurvivalLabel>& labels,
                    bool include_self) {
  check_batch(risks, labels);
  std::vector<Tensor> terms;
  std::int64_t n_events = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].event) continue;
    ++n_events;
    auto rset = risk_set(labels, labels[i].time_to_event);
    if (!include_self) {
      rset.erase(std::remove(rset.begin(), rset.end(), static_cast<std::int64_t>(i)),
                 rset.end());
    }
    if (rset.empty()) continue;
    Tensor r_i = gather(risks, {static_cast<std::int64_t>(i)});
    Tensor diffs = sub(gather(risks, rset), r_i);
    terms.push_back(reduce_sum(sigmoid(diffs)));
  }
  if (n_events == 0 || terms.empty()) return Tensor::scalar(0.0);
  Tensor total = reduce_sum(flatten(stack_rows(terms)));
  return scale(total, 1.0 / static_cast<double>(n_events));
}

Tensor survival_loss(const Tensor& risks, const std::vector<SurvivalLabel>& labels,
                     bool ranking_include_self) {
  return add(partial_likelihood_loss(risks, labels),
             ranking_loss(risks, labels, ranking_include_self));
}

double BaselineHazard::cumulative_at(double t) const {
  auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
  if (it == event_times.begin()) return 0.0;
  return cumulative_hazard[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

BaselineHazard breslow_baseline(const std::vector<double>& risks,
                                const std::vector<SurvivalLabel>& labels) {
  if (risks.size() != labels.size()) {
    throw std::invalid_argument("breslow_baseline: risk/label count mismatch");
  }
  std::vector<double> times;
  for (const auto& l : labels) {
    if (l.event) times.push_back(l.time_to_event);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  BaselineHazard bh;
  double cum = 0.0;
  for (double te : times) {
    std::int64_t d_e = 0;
    double denom = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (labels[k].event && labels[k].time_to_event == te) ++d_e;
      if (labels[k].time_to_event >= te) denom += std::exp(risks[k]);
    }
    cum += static_cast<double>(d_e) / denom;
    bh.event_times.push_back(te);
    bh.cumulative_hazard.push_back(cum);
  }
  return bh;
}

double predict_survival(double risk, const BaselineHazard& baseline, double t) {
  if (t < 0.0) throw std::out_of_range("predict_survival: negative time");
  return std::exp(-baseline.cumulative_at(t) * std::exp(risk));
}

}  // namespace trajsurv
