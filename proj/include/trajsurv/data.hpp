#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "trajsurv/controlpath.hpp"
#include "trajsurv/survhead.hpp"
#include "trajsurv/tacl.hpp"

namespace trajsurv {

struct PatientRecord {
  std::string id;
  ObservationSeq obs;
  SurvivalLabel label;
  SeveritySeries severity;
  // Synthetic-only ground truth (NaN / -1 / empty for ingested cohorts).
  double oracle_risk = std::numeric_limits<double>::quiet_NaN();
  int family = -1;
  std::vector<double> analytic_trend;  // hourly derivative of the noise-free severity
};

enum Split : int { kUnassigned = -1, kTrain = 0, kVal = 1, kTest = 2 };

struct Cohort {
  std::vector<PatientRecord> records;
  std::vector<std::string> feature_names;
  double window_h = 36.0;
  FeatureStats stats;            // filled by standardize()
  std::vector<int> split;        // Split per record
  bool standardized = false;

  std::vector<std::size_t> indices_of(int split_kind) const;
  std::vector<SurvivalLabel> labels_of(const std::vector<std::size_t>& idx) const;
};

struct SyntheticConfig {
  std::int64_t n_patients = 2000;
  std::int64_t d_features = 12;
  double window_h = 36.0;
  double obs_rate = 0.085;     // per-hour observation probability after t=0
  double missing_frac = 0.55;  // per-entry Bernoulli masking
  std::uint64_t seed = 42;
  // Event model: hazard after t_n is hazard_base * exp(beta . h(t_n)),
  // censoring by an independent discharge time and an administrative horizon.
  double hazard_base = 6e-5;
  double beta = 2.6;           // per-dimension effect size
  double censor_rate = 1.0 / 600.0;
  double horizon_h = 720.0;
  double feature_noise = 0.12;
  double latent_noise = 0.06;
  // 0 = continuous heterogeneity; 4 = archetype trajectory families.
  int n_families = 0;
  // 0 = every feature mixes the latent health state; k > 0 = only the first
  // k feature rows carry signal (rows 0 and 1 share one mixing row when
  // k >= 2), the rest are pure noise channels.
  int signal_features = 0;
};

// Synthetic longitudinal cohort with known ground truth: a 2-D mean-reverting
// latent health process drives SOFA-like severity components (clipped affine
// maps into [0,4], overall = component sum), feature observations at
// Poisson-thinned hours with Bernoulli masking, and exponential event times.
Cohort generate_synthetic(const SyntheticConfig& cfg);

struct CsvSchema {
  std::vector<std::string> feature_names;
  double window_h = 36.0;
  int min_observed = 20;  // rows with <= this many observed features are dropped
};

// Long-format ingestion: observations (patient_id,time_h,feature,value),
// labels (patient_id,time_to_event_h,event) and optional hourly severity
// (patient_id,hour,<severity columns...>). The labels file fixes the cohort
// order. Patients whose first retained observation is after hour 0 get an
// all-missing row at t=0 so every sequence starts at the admission time.
Cohort ingest_csv(const std::string& obs_path, const std::string& labels_path,
                  const std::string& severity_path, const CsvSchema& schema);

// Writes observations/labels/severity (and truth, when present) in the same
// schema ingest_csv reads; numeric fields round-trip exactly.
void export_csv(const Cohort& cohort, const std::string& dir);

// Seeded shuffle split into train/val/test by patient index.
void split_cohort(Cohort& cohort, double train_frac, double val_frac, std::uint64_t seed);

// Z-scores every feature using statistics from the training split's observed
// entries only (std floored at 1e-8). A feature with no observed training
// entry is a configuration error.
void standardize(Cohort& cohort);

}  // namespace trajsurv
