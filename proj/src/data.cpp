#include "trajsurv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "trajsurv/rng.hpp"

namespace trajsurv {

namespace {

// Six SOFA-like components as clipped affine maps of the 2-D latent health
// state; the first three load mainly on h1, the last three on h2.
constexpr int kComponents = 6;
constexpr double kCompW[kComponents][2] = {{1.0, 0.0}, {0.8, 0.2}, {1.2, 0.1},
                                           {0.0, 1.0}, {0.2, 0.8}, {0.1, 1.2}};
constexpr double kCompA[kComponents] = {2.0, 1.8, 2.2, 2.0, 1.8, 2.2};

double clip04(double v) { return std::min(4.0, std::max(0.0, v)); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> Cohort::indices_of(int split_kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == split_kind) out.push_back(i);
  }
  return out;
}

std::vector<SurvivalLabel> Cohort::labels_of(const std::vector<std::size_t>& idx) const {
  std::vector<SurvivalLabel> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(records[i].label);
  return out;
}

Cohort generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_patients < 1) throw ConfigError("synthetic: n_patients must be >= 1");
  if (cfg.d_features < 1) throw ConfigError("synthetic: d_features must be >= 1");
  if (!(cfg.obs_rate > 0.0)) {
    throw ConfigError("synthetic: obs_rate must be positive");
  }
  if (cfg.missing_frac < 0.0 || cfg.missing_frac >= 1.0) {
    throw ConfigError("synthetic: missing_frac must be in [0, 1)");
  }
  if (cfg.window_h <= 0.0) throw ConfigError("synthetic: window_h must be positive");
  if (cfg.signal_features > cfg.d_features) {
    throw ConfigError("synthetic: signal_features exceeds d_features");
  }
  if (cfg.n_families != 0 && cfg.n_families != 4) {
    throw ConfigError("synthetic: n_families must be 0 or 4");
  }

  const std::int64_t d = cfg.d_features;
  // Fixed mixing panel: feature k reads the latent state along a spread of
  // directions with staggered gains. In signal mode only the first
  // signal_features rows are nonzero, and rows 0/1 share one direction.
  std::vector<std::array<double, 2>> mixing(static_cast<std::size_t>(d), {0.0, 0.0});
  if (cfg.signal_features == 0) {
    for (std::int64_t k = 0; k < d; ++k) {
      const double ang = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(d);
      const double gain = 0.7 + 0.3 * static_cast<double>(k % 3);
      mixing[k] = {gain * std::cos(ang), gain * std::sin(ang)};
    }
  } else {
    for (int k = 0; k < cfg.signal_features; ++k) {
      if (k <= 1) {
        mixing[k] = {1.1, 0.8};
      } else {
        const double ang = 2.0 * M_PI * static_cast<double>(k) /
                           static_cast<double>(cfg.signal_features + 1);
        mixing[k] = {1.2 * std::cos(ang), 1.2 * std::sin(ang)};
      }
    }
  }

  Cohort cohort;
  cohort.window_h = cfg.window_h;
  for (std::int64_t k = 0; k < d; ++k) {
    char name[16];
    std::snprintf(name, sizeof(name), "f%02lld", static_cast<long long>(k));
    cohort.feature_names.push_back(name);
  }

  const std::int64_t hours = static_cast<std::int64_t>(std::floor(cfg.window_h));
  for (std::int64_t p = 0; p < cfg.n_patients; ++p) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(p)));
    PatientRecord rec;
    char id[24];
    std::snprintf(id, sizeof(id), "p%05lld", static_cast<long long>(p));
    rec.id = id;

    double h0[2], mu[2], theta;
    if (cfg.n_families == 4) {
      static constexpr double kH0[4][2] = {{2.2, 2.0}, {2.0, 1.8}, {-0.4, -0.3}, {0.4, 0.3}};
      static constexpr double kMu[4][2] = {{-1.6, -1.5}, {2.6, 2.4}, {-0.4, -0.3}, {-1.2, -1.0}};
      static constexpr double kTheta[4] = {0.14, 0.05, 0.05, 0.045};
      const int fam = static_cast<int>(p % 4);
      rec.family = fam;
      for (int q = 0; q < 2; ++q) {
        h0[q] = kH0[fam][q] + rng.normal(0.0, 0.15);
        mu[q] = kMu[fam][q] + rng.normal(0.0, 0.15);
      }
      theta = kTheta[fam];
    } else {
      for (int q = 0; q < 2; ++q) {
        h0[q] = rng.normal(0.0, 1.0);
        mu[q] = rng.normal(0.0, 1.0);
      }
      theta = rng.uniform(0.04, 0.14);
    }

    // Latent health: deterministic mean reversion toward mu plus a small
    // hourly OU noise component.
    std::vector<std::array<double, 2>> h(static_cast<std::size_t>(hours + 1));
    std::vector<std::array<double, 2>> m_det(static_cast<std::size_t>(hours + 1));
    std::vector<std::array<double, 2>> m_drift(static_cast<std::size_t>(hours + 1));
    double noise[2] = {0.0, 0.0};
    for (std::int64_t t = 0; t <= hours; ++t) {
      const double decay = std::exp(-theta * static_cast<double>(t));
      for (int q = 0; q < 2; ++q) {
        m_det[t][q] = mu[q] + (h0[q] - mu[q]) * decay;
        m_drift[t][q] = -theta * (h0[q] - mu[q]) * decay;
        h[t][q] = m_det[t][q] + noise[q];
      }
      for (int q = 0; q < 2; ++q) {
        noise[q] = (1.0 - theta) * noise[q] + cfg.latent_noise * rng.normal();
      }
    }

    // Hourly severity: overall score first, then the six components.
    rec.severity.hours.resize(static_cast<std::size_t>(hours + 1));
    rec.severity.s.resize(static_cast<std::size_t>(hours + 1));
    rec.analytic_trend.resize(static_cast<std::size_t>(hours + 1));
    for (std::int64_t t = 0; t <= hours; ++t) {
      rec.severity.hours[t] = static_cast<double>(t);
      std::vector<double> row(1 + kComponents, 0.0);
      double overall = 0.0;
      double trend = 0.0;
      for (int c = 0; c < kComponents; ++c) {
        const double raw = kCompA[c] + kCompW[c][0] * h[t][0] + kCompW[c][1] * h[t][1];
        const double sc = clip04(raw);
        row[1 + c] = sc;
        overall += sc;
        const double raw_det =
            kCompA[c] + kCompW[c][0] * m_det[t][0] + kCompW[c][1] * m_det[t][1];
        if (raw_det > 0.0 && raw_det < 4.0) {
          trend += kCompW[c][0] * m_drift[t][0] + kCompW[c][1] * m_drift[t][1];
        }
      }
      row[0] = overall;
      rec.severity.s[t] = std::move(row);
      rec.analytic_trend[t] = trend;
    }

    // Observation schedule: hour 0 always, later hours Poisson-thinned.
    std::vector<std::int64_t> obs_hours = {0};
    for (std::int64_t t = 1; t <= hours; ++t) {
      if (rng.bernoulli(cfg.obs_rate)) obs_hours.push_back(t);
    }
    for (std::int64_t t : obs_hours) {
      std::vector<double> vals(static_cast<std::size_t>(d), 0.0);
      std::vector<std::uint8_t> mask(static_cast<std::size_t>(d), 0);
      for (std::int64_t k = 0; k < d; ++k) {
        const double seasonal =
            0.1 * std::sin(2.0 * M_PI * static_cast<double>(t) / 24.0 +
                           2.0 * M_PI * static_cast<double>(k) / static_cast<double>(d));
        vals[k] = mixing[k][0] * h[t][0] + mixing[k][1] * h[t][1] + seasonal +
                  cfg.feature_noise * rng.normal();
      }
      // Per-entry masking, redrawn until at least one entry stays observed.
      bool any = false;
      while (!any) {
        for (std::int64_t k = 0; k < d; ++k) {
          mask[k] = rng.bernoulli(cfg.missing_frac) ? 0 : 1;
          any = any || mask[k];
        }
      }
      for (std::int64_t k = 0; k < d; ++k) {
        if (!mask[k]) vals[k] = 0.0;
      }
      rec.obs.times.push_back(static_cast<double>(t));
      rec.obs.values.push_back(std::move(vals));
      rec.obs.observed.push_back(std::move(mask));
    }

    // Event model from the latent state at the last observation.
    const std::int64_t tn = obs_hours.back();
    const double risk = cfg.beta * (h[tn][0] + h[tn][1]);
    rec.oracle_risk = risk;
    const double lambda = cfg.hazard_base * std::exp(risk);
    const double t_event = rng.exponential(lambda);
    const double t_censor = std::min(rng.exponential(cfg.censor_rate), cfg.horizon_h);
    rec.label.event = t_event <= t_censor ? 1 : 0;
    rec.label.time_to_event = std::min(t_event, t_censor);

    cohort.records.push_back(std::move(rec));
  }
  cohort.split.assign(cohort.records.size(), kUnassigned);
  return cohort;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw DataError("could not parse number '" + s + "' in " + context);
  }
  return v;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open file: " + path);
  return f;
}

}  // namespace

Cohort ingest_csv(const std::string& obs_path, const std::string& labels_path,
                  const std::string& severity_path, const CsvSchema& schema) {
  if (schema.feature_names.empty()) {
    throw ConfigError("ingest_csv: schema has no feature names");
  }
  std::map<std::string, std::int64_t> feat_idx;
  for (std::size_t k = 0; k < schema.feature_names.size(); ++k) {
    feat_idx[schema.feature_names[k]] = static_cast<std::int64_t>(k);
  }
  const std::int64_t d = static_cast<std::int64_t>(schema.feature_names.size());

  Cohort cohort;
  cohort.feature_names = schema.feature_names;
  cohort.window_h = schema.window_h;

  // Labels file fixes the cohort order.
  std::map<std::string, std::size_t> patient_index;
  {
    auto f = open_or_throw(labels_path);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = split_line(line);
      if (fields.size() != 3) throw DataError("labels row needs 3 fields: " + line);
      PatientRecord rec;
      rec.id = fields[0];
      rec.label.time_to_event = parse_double(fields[1], "labels");
      const double ev = parse_double(fields[2], "labels");
      if (ev != 0.0 && ev != 1.0) throw DataError("event indicator must be 0 or 1");
      if (rec.label.time_to_event < 0.0) throw DataError("negative time-to-event");
      rec.label.event = static_cast<int>(ev);
      if (patient_index.count(rec.id)) throw DataError("duplicate patient id " + rec.id);
      patient_index[rec.id] = cohort.records.size();
      cohort.records.push_back(std::move(rec));
    }
  }
  if (cohort.records.empty()) throw DataError("labels file has no patients");

  // Observations, grouped per (patient, time).
  std::vector<std::map<double, std::pair<std::vector<double>, std::vector<std::uint8_t>>>>
      grouped(cohort.records.size());
  {
    auto f = open_or_throw(obs_path);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = split_line(line);
      if (fields.size() != 4) throw DataError("observation row needs 4 fields: " + line);
      auto pit = patient_index.find(fields[0]);
      if (pit == patient_index.end()) {
        throw DataError("observation for unknown patient " + fields[0]);
      }
      const double t = parse_double(fields[1], "observations");
      if (t < 0.0) throw DataError("negative observation time for " + fields[0]);
      if (t > schema.window_h) continue;  // window truncation
      auto fit = feat_idx.find(fields[2]);
      if (fit == feat_idx.end()) {
        throw DataError("unknown feature name '" + fields[2] + "'");
      }
      auto& slot = grouped[pit->second][t];
      if (slot.first.empty()) {
        slot.first.assign(static_cast<std::size_t>(d), 0.0);
        slot.second.assign(static_cast<std::size_t>(d), 0);
      }
      slot.first[static_cast<std::size_t>(fit->second)] =
          parse_double(fields[3], "observations");
      slot.second[static_cast<std::size_t>(fit->second)] = 1;
    }
  }
  for (std::size_t p = 0; p < cohort.records.size(); ++p) {
    auto& rec = cohort.records[p];
    for (auto& [t, row] : grouped[p]) {
      std::int64_t observed = 0;
      for (auto o : row.second) observed += o;
      if (observed <= schema.min_observed) continue;  // sparse-row filter
      rec.obs.times.push_back(t);
      rec.obs.values.push_back(std::move(row.first));
      rec.obs.observed.push_back(std::move(row.second));
    }
    if (rec.obs.times.empty() || rec.obs.times.front() > 0.0) {
      rec.obs.times.insert(rec.obs.times.begin(), 0.0);
      rec.obs.values.insert(rec.obs.values.begin(),
                            std::vector<double>(static_cast<std::size_t>(d), 0.0));
      rec.obs.observed.insert(rec.obs.observed.begin(),
                              std::vector<std::uint8_t>(static_cast<std::size_t>(d), 0));
    }
    rec.obs.validate();
  }

  if (!severity_path.empty()) {
    auto f = open_or_throw(severity_path);
    std::string line;
    std::getline(f, line);
    const auto header = split_line(line);
    if (header.size() < 3) throw DataError("severity header needs >= 3 columns");
    const std::size_t width = header.size() - 2;
    std::vector<std::map<double, std::vector<double>>> sev(cohort.records.size());
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = split_line(line);
      if (fields.size() != header.size()) {
        throw DataError("severity row width mismatch: " + line);
      }
      auto pit = patient_index.find(fields[0]);
      if (pit == patient_index.end()) {
        throw DataError("severity for unknown patient " + fields[0]);
      }
      const double hour = parse_double(fields[1], "severity");
      std::vector<double> row(width);
      for (std::size_t k = 0; k < width; ++k) {
        row[k] = parse_double(fields[2 + k], "severity");
      }
      sev[pit->second][hour] = std::move(row);
    }
    for (std::size_t p = 0; p < cohort.records.size(); ++p) {
      for (auto& [hour, row] : sev[p]) {
        cohort.records[p].severity.hours.push_back(hour);
        cohort.records[p].severity.s.push_back(std::move(row));
      }
    }
  }

  cohort.split.assign(cohort.records.size(), kUnassigned);
  return cohort;
}

void export_csv(const Cohort& cohort, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::ofstream obs(fs::path(dir) / "observations.csv");
  obs << "patient_id,time_h,feature,value\n";
  for (const auto& rec : cohort.records) {
    for (std::size_t j = 0; j < rec.obs.times.size(); ++j) {
      for (std::size_t k = 0; k < cohort.feature_names.size(); ++k) {
        if (!rec.obs.observed[j][k]) continue;
        obs << rec.id << ',' << format_double(rec.obs.times[j]) << ','
            << cohort.feature_names[k] << ',' << format_double(rec.obs.values[j][k])
            << '\n';
      }
    }
  }

  std::ofstream lab(fs::path(dir) / "labels.csv");
  lab << "patient_id,time_to_event_h,event\n";
  for (const auto& rec : cohort.records) {
    lab << rec.id << ',' << format_double(rec.label.time_to_event) << ','
        << rec.label.event << '\n';
  }

  bool has_severity = false;
  for (const auto& rec : cohort.records) {
    if (!rec.severity.hours.empty()) has_severity = true;
  }
  if (has_severity) {
    std::ofstream sev(fs::path(dir) / "severity.csv");
    std::size_t width = 0;
    for (const auto& rec : cohort.records) {
      if (!rec.severity.s.empty()) width = rec.severity.s[0].size();
    }
    sev << "patient_id,hour,s_overall";
    for (std::size_t c = 1; c < width; ++c) sev << ",comp" << c - 1;
    sev << '\n';
    for (const auto& rec : cohort.records) {
      for (std::size_t hidx = 0; hidx < rec.severity.hours.size(); ++hidx) {
        sev << rec.id << ',' << format_double(rec.severity.hours[hidx]);
        for (double v : rec.severity.s[hidx]) sev << ',' << format_double(v);
        sev << '\n';
      }
    }
  }

  bool has_truth = false;
  for (const auto& rec : cohort.records) {
    if (!std::isnan(rec.oracle_risk)) has_truth = true;
  }
  if (has_truth) {
    std::ofstream truth(fs::path(dir) / "truth.csv");
    truth << "patient_id,oracle_risk,family\n";
    for (const auto& rec : cohort.records) {
      truth << rec.id << ',' << format_double(rec.oracle_risk) << ',' << rec.family
            << '\n';
    }
  }
}

void split_cohort(Cohort& cohort, double train_frac, double val_frac,
                  std::uint64_t seed) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
    throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
  }
  const std::size_t n = cohort.records.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5eedu));
  shuffle_in_place(idx, rng);
  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(train_frac * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(val_frac * static_cast<double>(n)));
  cohort.split.assign(n, kTest);
  for (std::size_t i = 0; i < n_train; ++i) cohort.split[idx[i]] = kTrain;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) cohort.split[idx[i]] = kVal;
}

void standardize(Cohort& cohort) {
  if (cohort.standardized) throw ConfigError("cohort is already standardized");
  const auto train = cohort.indices_of(kTrain);
  if (train.empty()) throw ConfigError("standardize: empty training split");
  const std::int64_t d = static_cast<std::int64_t>(cohort.feature_names.size());
  FeatureStats stats;
  stats.mean.assign(static_cast<std::size_t>(d), 0.0);
  stats.stddev.assign(static_cast<std::size_t>(d), 0.0);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(d), 0);
  for (auto i : train) {
    const auto& obs = cohort.records[i].obs;
    for (std::size_t j = 0; j < obs.times.size(); ++j) {
      for (std::int64_t k = 0; k < d; ++k) {
        if (!obs.observed[j][k]) continue;
        stats.mean[k] += obs.values[j][k];
        ++counts[k];
      }
    }
  }
  for (std::int64_t k = 0; k < d; ++k) {
    if (counts[k] == 0) {
      throw ConfigError("feature '" + cohort.feature_names[k] +
                        "' has no observed training entries");
    }
    stats.mean[k] /= static_cast<double>(counts[k]);
  }
  for (auto i : train) {
    const auto& obs = cohort.records[i].obs;
    for (std::size_t j = 0; j < obs.times.size(); ++j) {
      for (std::int64_t k = 0; k < d; ++k) {
        if (!obs.observed[j][k]) continue;
        const double diff = obs.values[j][k] - stats.mean[k];
        stats.stddev[k] += diff * diff;
      }
    }
  }
  for (std::int64_t k = 0; k < d; ++k) {
    stats.stddev[k] = std::sqrt(stats.stddev[k] / static_cast<double>(counts[k]));
    if (stats.stddev[k] < 1e-8) stats.stddev[k] = 1e-8;
  }
  for (auto& rec : cohort.records) {
    for (std::size_t j = 0; j < rec.obs.times.size(); ++j) {
      for (std::int64_t k = 0; k < d; ++k) {
        if (!rec.obs.observed[j][k]) continue;
        rec.obs.values[j][k] = (rec.obs.values[j][k] - stats.mean[k]) / stats.stddev[k];
      }
    }
  }
  cohort.stats = std::move(stats);
  cohort.standardized = true;
}

}  // namespace trajsurv
