#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trajsurv/config.hpp"
#include "trajsurv/data.hpp"
#include "trajsurv/interpret.hpp"
#include "trajsurv/metrics.hpp"
#include "trajsurv/model.hpp"

namespace trajsurv {

// Cohort after splitting, standardization, imputation and path construction;
// anchor labels are the severity/trend vectors at the nearest hour to each
// observation time.
struct PreparedCohort {
  Cohort cohort;
  std::vector<ControlPath> paths;
  std::vector<std::vector<std::vector<double>>> anchor_s;  // per patient, per knot
  std::vector<std::vector<std::vector<double>>> anchor_v;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  bool has_severity = false;
};

Cohort load_cohort(const RunConfig& cfg);
PreparedCohort prepare_cohort(Cohort cohort, const RunConfig& cfg);

struct EpochLog {
  std::int64_t epoch = 0;
  double loss_total = 0.0;
  double loss_pl = 0.0;
  double loss_pr = 0.0;
  double loss_tacl = 0.0;
  double val_c_index = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelParams model;
  std::vector<EpochLog> logs;
  std::int64_t best_epoch = -1;
  double best_val = std::numeric_limits<double>::quiet_NaN();
};

TrainResult train_model(const PreparedCohort& data, const RunConfig& cfg);

// Batched no-tape encoding of a patient subset (fixed chunking keeps results
// byte-identical across runs).
std::vector<LatentTrajectory> encode_subset(const PreparedCohort& data,
                                            const std::vector<std::size_t>& idx,
                                            const ModelParams& model,
                                            const RunConfig& cfg);

std::vector<double> risk_scores(const PreparedCohort& data,
                                const std::vector<std::size_t>& idx,
                                const ModelParams& model, const RunConfig& cfg);

struct AlignmentRow {
  double hour = 0.0;
  std::int64_t n = 0;
  std::optional<double> rho_severity;
  std::optional<double> rho_trend;
};

struct EvalOutputs {
  metrics::EvalReport report;
  std::vector<AlignmentRow> alignment;
  // Calibration bins per quartile (outer index = quartile).
  std::vector<std::vector<metrics::CalibrationBin>> calibration;
  std::vector<double> test_risks;
};

// use_oracle_risk substitutes the generator's ground-truth risk for the
// model's (synthetic cohorts only); the model may then be left default.
EvalOutputs evaluate_model(const PreparedCohort& data, const ModelParams& model,
                           const RunConfig& cfg, bool use_oracle_risk = false);

// Mean Spearman alignment over an hour window (diagnostic used to compare
// runs with and without the contrastive objective).
double mean_alignment(const std::vector<AlignmentRow>& rows, double hour_lo,
                      double hour_hi);

struct InterpretOutputs {
  interpret::AvgField field;
  std::vector<std::pair<std::int64_t, double>> importance;
  std::vector<double> relevance;  // d x d
  std::vector<interpret::PhenotypeCell> phenotype;  // empty if not computed
};

InterpretOutputs interpret_model(const PreparedCohort& data, const ModelParams& model,
                                 const RunConfig& cfg, bool with_phenotype);

struct ClusterOutputs {
  interpret::ClusterResult result;
  std::vector<std::size_t> patient_idx;  // cohort indices, aligned to assignments
};

ClusterOutputs cluster_model(const PreparedCohort& data, const ModelParams& model,
                             const RunConfig& cfg, int n_clusters);

}  // namespace trajsurv
