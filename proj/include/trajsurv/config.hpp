#pragma once

#include <cstdint>
#include <string>

#include "trajsurv/data.hpp"
#include "trajsurv/ncde.hpp"

namespace trajsurv {

// Flat key=value run configuration. Defaults follow the tuned hyperparameter
// table (alpha 1.0, kappa1 2, kappa2 30, delta 20, d_z 64); the optimizer
// settings (lr 1e-3, weight decay 1e-4, batch 64) are project defaults.
struct RunConfig {
  // Data source
  std::string source = "synthetic";  // synthetic | csv
  SyntheticConfig synthetic;
  std::string csv_observations;
  std::string csv_labels;
  std::string csv_severity;
  std::string csv_features;  // comma-separated feature names
  int min_observed = 20;
  double train_frac = 0.7;
  double val_frac = 0.1;

  // Model
  std::int64_t d_z = 64;
  std::int64_t hidden = 64;
  std::int64_t head_hidden = 32;
  double field_scale = 1.0;
  std::string scheme = "hermite";  // hermite | rectilinear

  // Solver
  std::string solver = "rk4";  // rk4 | euler
  double steps_per_hour = 2.0;
  double grid_resolution_h = 1.0;

  // Losses
  double alpha = 1.0;
  double kappa1 = 2.0;
  double kappa2 = 30.0;
  double delta = 20.0;
  std::int64_t delta_t_hours = 2;
  bool use_tacl = true;
  bool use_time_mask = true;
  bool use_ranking_loss = true;
  bool ranking_include_self = true;

  // Training
  std::int64_t epochs = 100;
  std::int64_t patience = 5;
  std::int64_t batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 42;

  // Evaluation / interpretation
  int calibration_bins = 10;
  std::int64_t field_samples = 2048;
  int clusters = 4;
  std::int64_t phenotype_k = 50;
  int phenotype_grid = 20;

  PathScheme path_scheme() const;
  SolverConfig solver_config() const;
  void validate() const;  // throws ConfigError on out-of-range values

  // Canonical serialization: every key in fixed order, one per line. The
  // FNV-1a hash of this string identifies the configuration in checkpoints.
  std::string canonical_string() const;
  std::uint64_t hash() const;

  void apply_ablation(const std::string& name);  // a1 | a2 | a3 | none
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace trajsurv
