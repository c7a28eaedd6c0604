#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "trajsurv/metrics.hpp"
#include "trajsurv/ncde.hpp"
#include "trajsurv/tacl.hpp"

namespace trajsurv {
namespace interpret {

using StateSeq = std::vector<std::vector<double>>;

// Element-wise mean of f_theta(z) over latent states sampled uniformly from
// (patient, grid-time) pairs. Columns 0..d-1 correspond to feature channels,
// the last column is the time channel.
struct AvgField {
  std::vector<double> matrix;  // rows x cols row-major
  std::int64_t rows = 0;       // d_z
  std::int64_t cols = 0;       // d + 1
  std::int64_t sample_count = 0;

  double column_norm(std::int64_t col) const;
};

AvgField average_field(const std::vector<StateSeq>& grid_states_per_patient,
                       const EncoderParams& params, std::int64_t n_samples,
                       std::uint64_t seed);

// Per-feature L2 column norms, descending, ties broken by feature index.
// The time channel is excluded from the ranking (its derivative is
// identically 1 and would dominate meaninglessly).
std::vector<std::pair<std::int64_t, double>> feature_importance(const AvgField& field);

// Cosine similarities between feature columns (d x d, row-major). Zero-norm
// columns have relevance 0 against everything, including themselves.
std::vector<double> feature_relevance(const AvgField& field);

// Dynamic time warping with L2 state cost and the standard three-way
// recursion D(i,j) = cost(i,j) + min(D(i-1,j), D(i,j-1), D(i-1,j-1)).
double dtw_distance(const StateSeq& a, const StateSeq& b);

// Optimal warping path as (i, j) index pairs, ties resolved diagonal-first.
std::vector<std::pair<std::int64_t, std::int64_t>> dtw_path(const StateSeq& a,
                                                            const StateSeq& b);

// DTW barycenter averaging initialized at the medoid. Iterates until the
// total DTW cost stops improving (never past `iters` refinements); the
// returned centroid is the best one seen, so the objective is non-increasing.
StateSeq dba_centroid(const std::vector<StateSeq>& sequences, int iters = 10);

struct ClusterResult {
  std::vector<int> assignments;        // cluster id per trajectory
  std::vector<StateSeq> centroids;     // one barycenter per cluster
  int n_clusters = 0;
  // Per-cluster profiles, attached when severity/labels are provided.
  std::vector<std::vector<double>> mean_severity;  // per cluster, by hour
  std::vector<metrics::KMCurve> km_curves;
};

// k-medoids-style alternation under DTW distance with DBA centroid
// refinement. Initialization is deterministic (global medoid, then
// farthest-first), which also makes assignments invariant to input order up
// to exact distance ties; the seed parameter is accepted for interface
// stability and reproducibility contracts.
ClusterResult cluster_trajectories(const std::vector<StateSeq>& trajectories, int C,
                                   std::uint64_t seed);

// Hourly mean severity (overall score) and KM curve per cluster.
void attach_cluster_profiles(ClusterResult& result,
                             const std::vector<SeveritySeries>& severities,
                             const std::vector<SurvivalLabel>& labels);

struct PhenotypeCell {
  double x = 0.0, y = 0.0;
  std::int64_t dominant_component = -1;
  double intensity = 0.0;                 // mean score of the dominant component
  std::vector<double> mean_components;
};

// For each 2-D probe point, the mean component scores of its k nearest
// anchor states; the dominant phenotype is the argmax component.
std::vector<PhenotypeCell> phenotype_map(
    const std::vector<std::vector<double>>& anchor_xy,
    const std::vector<std::vector<double>>& anchor_components,
    const std::vector<std::pair<double, double>>& probes, std::int64_t k);

// Top-2 principal-component projection (power iteration with deflation);
// used to map d_z > 2 latent states onto the plane for the phenotype map.
std::vector<std::vector<double>> project_2d(const std::vector<std::vector<double>>& states);

// Adjusted Rand index between two labelings (diagnostic for synthetic
// cohorts with known family labels).
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace interpret
}  // namespace trajsurv
