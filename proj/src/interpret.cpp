#include "trajsurv/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trajsurv/rng.hpp"

namespace trajsurv {
namespace interpret {

double AvgField::column_norm(std::int64_t col) const {
  double s = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double v = matrix[r * cols + col];
    s += v * v;
  }
  return std::sqrt(s);
}

AvgField average_field(const std::vector<StateSeq>& grid_states_per_patient,
                       const EncoderParams& params, std::int64_t n_samples,
                       std::uint64_t seed) {
  if (grid_states_per_patient.empty()) {
    throw std::invalid_argument("average_field: empty cohort");
  }
  if (n_samples < 1) throw std::invalid_argument("average_field: n_samples >= 1");
  Rng rng(seed);
  AvgField field;
  field.rows = params.latent_dim;
  field.cols = params.input_channels;
  field.matrix.assign(static_cast<std::size_t>(field.rows * field.cols), 0.0);
  const std::uint64_t n_pat = grid_states_per_patient.size();
  std::int64_t taken = 0;
  while (taken < n_samples) {
    const auto& states = grid_states_per_patient[rng.index(n_pat)];
    if (states.empty()) continue;
    const auto& z = states[rng.index(states.size())];
    const auto f = field_matrix(z, params);
    for (std::size_t i = 0; i < f.size(); ++i) field.matrix[i] += f[i];
    ++taken;
  }
  for (auto& v : field.matrix) v /= static_cast<double>(n_samples);
  field.sample_count = n_samples;
  return field;
}

std::vector<std::pair<std::int64_t, double>> feature_importance(const AvgField& field) {
  std::vector<std::pair<std::int64_t, double>> scores;
  for (std::int64_t c = 0; c + 1 < field.cols; ++c) {
    scores.emplace_back(c, field.column_norm(c));
  }
  std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return scores;
}

std::vector<double> feature_relevance(const AvgField& field) {
  const std::int64_t d = field.cols - 1;
  std::vector<double> norms(static_cast<std::size_t>(d));
  for (std::int64_t c = 0; c < d; ++c) norms[c] = field.column_norm(c);
  std::vector<double> rel(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t a = 0; a < d; ++a) {
    for (std::int64_t b = a; b < d; ++b) {
      double v = 0.0;
      if (norms[a] > 0.0 && norms[b] > 0.0) {
        double dp = 0.0;
        for (std::int64_t r = 0; r < field.rows; ++r) {
          dp += field.matrix[r * field.cols + a] * field.matrix[r * field.cols + b];
        }
        v = dp / (norms[a] * norms[b]);
      }
      rel[a * d + b] = v;
      rel[b * d + a] = v;
    }
  }
  return rel;
}

// ---------------------------------------------------------------------------
// DTW

namespace {

double state_cost(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<double> accumulated_cost(const StateSeq& a, const StateSeq& b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("dtw: sequences must be non-empty");
  }
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> d(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = state_cost(a[i], b[j]);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else if (i == 0) {
        best = d[j - 1];
      } else if (j == 0) {
        best = d[(i - 1) * m];
      } else {
        best = std::min({d[(i - 1) * m + j - 1], d[(i - 1) * m + j], d[i * m + j - 1]});
      }
      d[i * m + j] = c + best;
    }
  }
  return d;
}

}  // namespace

double dtw_distance(const StateSeq& a, const StateSeq& b) {
  const auto d = accumulated_cost(a, b);
  return d.back();
}

std::vector<std::pair<std::int64_t, std::int64_t>> dtw_path(const StateSeq& a,
                                                            const StateSeq& b) {
  const auto d = accumulated_cost(a, b);
  const std::size_t m = b.size();
  std::vector<std::pair<std::int64_t, std::int64_t>> path;
  std::size_t i = a.size() - 1, j = m - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = d[(i - 1) * m + j - 1];
      const double up = d[(i - 1) * m + j];
      const double left = d[i * m + j - 1];
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// ---------------------------------------------------------------------------
// DBA and clustering

namespace {

bool seq_less(const StateSeq& a, const StateSeq& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      if (a[i][k] != b[i][k]) return a[i][k] < b[i][k];
    }
  }
  return false;
}

double total_cost(const std::vector<StateSeq>& seqs, const StateSeq& centroid) {
  double s = 0.0;
  for (const auto& q : seqs) s += dtw_distance(q, centroid);
  return s;
}

std::size_t medoid_index(const std::vector<StateSeq>& seqs) {
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    double c = 0.0;
    for (std::size_t j = 0; j < seqs.size(); ++j) {
      if (j != i) c += dtw_distance(seqs[i], seqs[j]);
    }
    if (c < best_cost || (c == best_cost && seq_less(seqs[i], seqs[best]))) {
      best_cost = c;
      best = i;
    }
  }
  return best;
}

}  // namespace

StateSeq dba_centroid(const std::vector<StateSeq>& sequences, int iters) {
  if (sequences.empty()) throw std::invalid_argument("dba_centroid: no sequences");
  // Canonical member order keeps the averaging sums independent of caller
  // ordering (cluster assignments must be permutation invariant).
  std::vector<StateSeq> seqs = sequences;
  std::sort(seqs.begin(), seqs.end(), seq_less);
  if (seqs.size() == 1) return seqs[0];

  StateSeq centroid = seqs[medoid_index(seqs)];
  double best_cost = total_cost(seqs, centroid);
  StateSeq best = centroid;
  const std::size_t dim = centroid[0].size();
  for (int it = 0; it < iters; ++it) {
    std::vector<std::vector<double>> sums(centroid.size(), std::vector<double>(dim, 0.0));
    std::vector<std::int64_t> counts(centroid.size(), 0);
    for (const auto& q : seqs) {
      for (const auto& [qi, ci] : dtw_path(q, centroid)) {
        const auto& state = q[static_cast<std::size_t>(qi)];
        auto& acc = sums[static_cast<std::size_t>(ci)];
        for (std::size_t k = 0; k < dim; ++k) acc[k] += state[k];
        ++counts[static_cast<std::size_t>(ci)];
      }
    }
    for (std::size_t c = 0; c < centroid.size(); ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t k = 0; k < dim; ++k) {
        centroid[c][k] = sums[c][k] / static_cast<double>(counts[c]);
      }
    }
    const double cost = total_cost(seqs, centroid);
    if (cost >= best_cost) break;  // mean update with L2 costs may stall; keep the best
    best_cost = cost;
    best = centroid;
  }
  return best;
}

ClusterResult cluster_trajectories(const std::vector<StateSeq>& trajectories, int C,
                                   std::uint64_t /*seed*/) {
  const std::size_t n = trajectories.size();
  if (C < 1) throw std::invalid_argument("cluster_trajectories: C must be >= 1");
  if (static_cast<std::size_t>(C) > n) {
    throw std::invalid_argument("cluster_trajectories: C=" + std::to_string(C) +
                                " exceeds trajectory count " + std::to_string(n));
  }
  for (const auto& t : trajectories) {
    if (t.empty()) throw std::invalid_argument("cluster_trajectories: empty trajectory");
  }

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dtw_distance(trajectories[i], trajectories[j]);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  }

  // Global medoid first, then farthest-first; ties resolved by total
  // distance, then by lexicographic sequence order, so the choice does not
  // depend on input permutation.
  std::vector<double> totals(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) totals[i] += dist[i * n + j];
  }
  auto better = [&](std::size_t a, std::size_t b) {  // is a a better pick than b
    if (totals[a] != totals[b]) return totals[a] < totals[b];
    return seq_less(trajectories[a], trajectories[b]);
  };
  std::vector<std::size_t> medoids;
  {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (better(i, pick)) pick = i;
    }
    medoids.push_back(pick);
  }
  while (static_cast<int>(medoids.size()) < C) {
    std::size_t pick = n;
    double pick_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(medoids.begin(), medoids.end(), i) != medoids.end()) continue;
      double mind = std::numeric_limits<double>::infinity();
      for (auto m : medoids) mind = std::min(mind, dist[i * n + m]);
      if (mind > pick_d || (mind == pick_d && pick < n && better(i, pick))) {
        pick_d = mind;
        pick = i;
      }
    }
    medoids.push_back(pick);
  }

  std::vector<StateSeq> centroids;
  centroids.reserve(static_cast<std::size_t>(C));
  for (auto m : medoids) centroids.push_back(trajectories[m]);

  std::vector<int> assign(n, -1);
  for (int round = 0; round < 20; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < C; ++c) {
        const double d = dtw_distance(trajectories[i], centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < C; ++c) {
      std::vector<StateSeq> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) members.push_back(trajectories[i]);
      }
      if (!members.empty()) {
        centroids[static_cast<std::size_t>(c)] = dba_centroid(members);
      }
    }
  }

  ClusterResult result;
  result.assignments = std::move(assign);
  result.centroids = std::move(centroids);
  result.n_clusters = C;
  return result;
}

void attach_cluster_profiles(ClusterResult& result,
                             const std::vector<SeveritySeries>& severities,
                             const std::vector<SurvivalLabel>& labels) {
  const std::size_t n = result.assignments.size();
  if (severities.size() != n || labels.size() != n) {
    throw std::invalid_argument("attach_cluster_profiles: cohort size mismatch");
  }
  const int C = result.n_clusters;
  std::size_t max_hours = 0;
  for (const auto& sev : severities) max_hours = std::max(max_hours, sev.hours.size());

  result.mean_severity.assign(static_cast<std::size_t>(C), {});
  result.km_curves.clear();
  for (int c = 0; c < C; ++c) {
    std::vector<double> sums(max_hours, 0.0);
    std::vector<std::int64_t> counts(max_hours, 0);
    std::vector<SurvivalLabel> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (result.assignments[i] != c) continue;
      members.push_back(labels[i]);
      for (std::size_t h = 0; h < severities[i].hours.size(); ++h) {
        sums[h] += severities[i].s[h][0];  // overall severity is component 0
        ++counts[h];
      }
    }
    auto& mean = result.mean_severity[static_cast<std::size_t>(c)];
    for (std::size_t h = 0; h < max_hours; ++h) {
      if (counts[h] > 0) mean.push_back(sums[h] / static_cast<double>(counts[h]));
    }
    if (members.empty()) {
      result.km_curves.push_back(metrics::KMCurve{});
    } else {
      result.km_curves.push_back(metrics::kaplan_meier(members));
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<PhenotypeCell> phenotype_map(
    const std::vector<std::vector<double>>& anchor_xy,
    const std::vector<std::vector<double>>& anchor_components,
    const std::vector<std::pair<double, double>>& probes, std::int64_t k) {
  if (anchor_xy.empty() || anchor_xy.size() != anchor_components.size()) {
    throw std::invalid_argument("phenotype_map: anchors and components must align");
  }
  if (k < 1) throw std::invalid_argument("phenotype_map: k must be >= 1");
  if (static_cast<std::size_t>(k) > anchor_xy.size()) {
    std::fprintf(stderr, "warning: phenotype_map k=%lld exceeds %zu anchors; using all\n",
                 static_cast<long long>(k), anchor_xy.size());
    k = static_cast<std::int64_t>(anchor_xy.size());
  }
  const std::size_t n_comp = anchor_components[0].size();
  std::vector<PhenotypeCell> cells;
  cells.reserve(probes.size());
  std::vector<std::size_t> idx(anchor_xy.size());
  for (const auto& probe : probes) {
    std::iota(idx.begin(), idx.end(), 0);
    auto sq = [&](std::size_t i) {
      const double dx = anchor_xy[i][0] - probe.first;
      const double dy = anchor_xy[i][1] - probe.second;
      return dx * dx + dy * dy;
    };
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return sq(a) < sq(b); });
    PhenotypeCell cell;
    cell.x = probe.first;
    cell.y = probe.second;
    cell.mean_components.assign(n_comp, 0.0);
    for (std::int64_t r = 0; r < k; ++r) {
      const auto& comp = anchor_components[idx[static_cast<std::size_t>(r)]];
      for (std::size_t c = 0; c < n_comp; ++c) cell.mean_components[c] += comp[c];
    }
    for (auto& v : cell.mean_components) v /= static_cast<double>(k);
    cell.dominant_component = static_cast<std::int64_t>(
        std::max_element(cell.mean_components.begin(), cell.mean_components.end()) -
        cell.mean_components.begin());
    cell.intensity = cell.mean_components[static_cast<std::size_t>(cell.dominant_component)];
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<std::vector<double>> project_2d(const std::vector<std::vector<double>>& states) {
  if (states.empty()) throw std::invalid_argument("project_2d: no states");
  const std::size_t n = states.size();
  const std::size_t d = states[0].size();
  if (d == 2) return states;
  std::vector<double> mean(d, 0.0);
  for (const auto& s : states) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += s[k];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (const auto& s : states) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = s[a] - mean[a];
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += da * (s[b] - mean[b]);
    }
  }
  for (auto& v : cov) v /= static_cast<double>(n);

  auto power_iter = [&](const std::vector<double>& m) {
    std::vector<double> v(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) v[k] = 1.0 / std::sqrt(static_cast<double>(d) + k);
    std::vector<double> w(d);
    for (int it = 0; it < 300; ++it) {
      for (std::size_t a = 0; a < d; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < d; ++b) s += m[a * d + b] * v[b];
        w[a] = s;
      }
      double nrm = 0.0;
      for (double x : w) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm == 0.0) break;
      for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / nrm;
    }
    return v;
  };

  const auto v1 = power_iter(cov);
  double lam1 = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < d; ++b) s += cov[a * d + b] * v1[b];
    lam1 += v1[a] * s;
  }
  std::vector<double> deflated = cov;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) deflated[a * d + b] -= lam1 * v1[a] * v1[b];
  }
  const auto v2 = power_iter(deflated);

  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (const auto& s : states) {
    double p1 = 0.0, p2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      p1 += (s[k] - mean[k]) * v1[k];
      p2 += (s[k] - mean[k]) * v2[k];
    }
    out.push_back({p1, p2});
  }
  return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("adjusted_rand_index: labelings must align");
  }
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::int64_t> table(static_cast<std::size_t>(ka * kb), 0);
  std::vector<std::int64_t> ra(static_cast<std::size_t>(ka), 0);
  std::vector<std::int64_t> rb(static_cast<std::size_t>(kb), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++table[static_cast<std::size_t>(a[i] * kb + b[i])];
    ++ra[static_cast<std::size_t>(a[i])];
    ++rb[static_cast<std::size_t>(b[i])];
  }
  auto choose2 = [](std::int64_t x) { return 0.5 * static_cast<double>(x) * (x - 1); };
  double sum_nij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (auto v : table) sum_nij += choose2(v);
  for (auto v : ra) sum_a += choose2(v);
  for (auto v : rb) sum_b += choose2(v);
  const double total = choose2(static_cast<std::int64_t>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_nij - expected) / (max_index - expected);
}

}  // namespace interpret
}  // namespace trajsurv
