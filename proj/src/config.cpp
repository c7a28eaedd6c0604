#include "trajsurv/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace trajsurv {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PathScheme RunConfig::path_scheme() const {
  if (scheme == "hermite") return PathScheme::cubic_hermite_backward;
  if (scheme == "rectilinear") return PathScheme::rectilinear;
  throw ConfigError("unknown interpolation scheme '" + scheme + "'");
}

SolverConfig RunConfig::solver_config() const {
  SolverConfig cfg;
  if (solver == "rk4") {
    cfg.method = SolverMethod::rk4;
  } else if (solver == "euler") {
    cfg.method = SolverMethod::euler;
  } else {
    throw ConfigError("unknown solver '" + solver + "'");
  }
  cfg.steps_per_hour = steps_per_hour;
  cfg.grid_resolution_h = grid_resolution_h;
  return cfg;
}

void RunConfig::validate() const {
  if (source != "synthetic" && source != "csv") {
    throw ConfigError("source must be 'synthetic' or 'csv'");
  }
  if (source == "csv" && (csv_observations.empty() || csv_labels.empty())) {
    throw ConfigError("csv source requires csv_observations and csv_labels");
  }
  if (source == "csv" && csv_features.empty()) {
    throw ConfigError("csv source requires csv_features (comma-separated names)");
  }
  path_scheme();
  solver_config();
  if (steps_per_hour < 1.0) throw ConfigError("steps_per_hour must be >= 1");
  if (grid_resolution_h <= 0.0) throw ConfigError("grid_resolution_h must be > 0");
  if (d_z < 1 || hidden < 1 || head_hidden < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (kappa1 <= 0.0 || kappa2 <= 0.0) throw ConfigError("kappa1/kappa2 must be > 0");
  if (delta < 0.0) throw ConfigError("delta must be >= 0");
  if (delta_t_hours < 1) throw ConfigError("delta_t_hours must be >= 1");
  if (epochs < 1 || batch_size < 1) throw ConfigError("epochs/batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (lr <= 0.0) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
    throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
  }
  if (calibration_bins < 1) throw ConfigError("calibration_bins must be >= 1");
  if (field_samples < 1) throw ConfigError("field_samples must be >= 1");
  if (clusters < 1) throw ConfigError("clusters must be >= 1");
  if (phenotype_k < 1 || phenotype_grid < 2) {
    throw ConfigError("phenotype_k >= 1 and phenotype_grid >= 2 required");
  }
  if (min_observed < 0) throw ConfigError("min_observed must be >= 0");
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string RunConfig::canonical_string() const {
  std::ostringstream out;
  out << "source=" << source << '\n';
  out << "n_patients=" << synthetic.n_patients << '\n';
  out << "d_features=" << synthetic.d_features << '\n';
  out << "window_h=" << fmt_double(synthetic.window_h) << '\n';
  out << "obs_rate=" << fmt_double(synthetic.obs_rate) << '\n';
  out << "missing_frac=" << fmt_double(synthetic.missing_frac) << '\n';
  out << "hazard_base=" << fmt_double(synthetic.hazard_base) << '\n';
  out << "beta=" << fmt_double(synthetic.beta) << '\n';
  out << "censor_rate=" << fmt_double(synthetic.censor_rate) << '\n';
  out << "horizon_h=" << fmt_double(synthetic.horizon_h) << '\n';
  out << "feature_noise=" << fmt_double(synthetic.feature_noise) << '\n';
  out << "latent_noise=" << fmt_double(synthetic.latent_noise) << '\n';
  out << "n_families=" << synthetic.n_families << '\n';
  out << "signal_features=" << synthetic.signal_features << '\n';
  out << "csv_observations=" << csv_observations << '\n';
  out << "csv_labels=" << csv_labels << '\n';
  out << "csv_severity=" << csv_severity << '\n';
  out << "csv_features=" << csv_features << '\n';
  out << "min_observed=" << min_observed << '\n';
  out << "train_frac=" << fmt_double(train_frac) << '\n';
  out << "val_frac=" << fmt_double(val_frac) << '\n';
  out << "d_z=" << d_z << '\n';
  out << "hidden=" << hidden << '\n';
  out << "head_hidden=" << head_hidden << '\n';
  out << "field_scale=" << fmt_double(field_scale) << '\n';
  out << "scheme=" << scheme << '\n';
  out << "solver=" << solver << '\n';
  out << "steps_per_hour=" << fmt_double(steps_per_hour) << '\n';
  out << "grid_resolution_h=" << fmt_double(grid_resolution_h) << '\n';
  out << "alpha=" << fmt_double(alpha) << '\n';
  out << "kappa1=" << fmt_double(kappa1) << '\n';
  out << "kappa2=" << fmt_double(kappa2) << '\n';
  out << "delta=" << fmt_double(delta) << '\n';
  out << "delta_t_hours=" << delta_t_hours << '\n';
  out << "use_tacl=" << (use_tacl ? 1 : 0) << '\n';
  out << "use_time_mask=" << (use_time_mask ? 1 : 0) << '\n';
  out << "use_ranking_loss=" << (use_ranking_loss ? 1 : 0) << '\n';
  out << "ranking_include_self=" << (ranking_include_self ? 1 : 0) << '\n';
  out << "epochs=" << epochs << '\n';
  out << "patience=" << patience << '\n';
  out << "batch_size=" << batch_size << '\n';
  out << "lr=" << fmt_double(lr) << '\n';
  out << "weight_decay=" << fmt_double(weight_decay) << '\n';
  out << "seed=" << seed << '\n';
  out << "calibration_bins=" << calibration_bins << '\n';
  out << "field_samples=" << field_samples << '\n';
  out << "clusters=" << clusters << '\n';
  out << "phenotype_k=" << phenotype_k << '\n';
  out << "phenotype_grid=" << phenotype_grid << '\n';
  return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical_string()); }

void RunConfig::apply_ablation(const std::string& name) {
  if (name == "none" || name.empty()) return;
  if (name == "a1") {
    use_time_mask = false;
  } else if (name == "a2") {
    use_tacl = false;
  } else if (name == "a3") {
    use_tacl = false;
    use_ranking_loss = false;
  } else {
    throw ConfigError("unknown ablation '" + name + "' (expected a1|a2|a3|none)");
  }
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_num(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return x;
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
  const double x = parse_num(v, key);
  const std::int64_t i = static_cast<std::int64_t>(x);
  if (static_cast<double>(i) != x) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return i;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
      line.pop_back();
    }
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);

    if (key == "source") cfg.source = val;
    else if (key == "n_patients") cfg.synthetic.n_patients = parse_int(val, key);
    else if (key == "d_features") cfg.synthetic.d_features = parse_int(val, key);
    else if (key == "window_h") cfg.synthetic.window_h = parse_num(val, key);
    else if (key == "obs_rate") cfg.synthetic.obs_rate = parse_num(val, key);
    else if (key == "missing_frac") cfg.synthetic.missing_frac = parse_num(val, key);
    else if (key == "hazard_base") cfg.synthetic.hazard_base = parse_num(val, key);
    else if (key == "beta") cfg.synthetic.beta = parse_num(val, key);
    else if (key == "censor_rate") cfg.synthetic.censor_rate = parse_num(val, key);
    else if (key == "horizon_h") cfg.synthetic.horizon_h = parse_num(val, key);
    else if (key == "feature_noise") cfg.synthetic.feature_noise = parse_num(val, key);
    else if (key == "latent_noise") cfg.synthetic.latent_noise = parse_num(val, key);
    else if (key == "n_families") cfg.synthetic.n_families = static_cast<int>(parse_int(val, key));
    else if (key == "signal_features") cfg.synthetic.signal_features = static_cast<int>(parse_int(val, key));
    else if (key == "csv_observations") cfg.csv_observations = val;
    else if (key == "csv_labels") cfg.csv_labels = val;
    else if (key == "csv_severity") cfg.csv_severity = val;
    else if (key == "csv_features") cfg.csv_features = val;
    else if (key == "min_observed") cfg.min_observed = static_cast<int>(parse_int(val, key));
    else if (key == "train_frac") cfg.train_frac = parse_num(val, key);
    else if (key == "val_frac") cfg.val_frac = parse_num(val, key);
    else if (key == "d_z") cfg.d_z = parse_int(val, key);
    else if (key == "hidden") cfg.hidden = parse_int(val, key);
    else if (key == "head_hidden") cfg.head_hidden = parse_int(val, key);
    else if (key == "field_scale") cfg.field_scale = parse_num(val, key);
    else if (key == "scheme") cfg.scheme = val;
    else if (key == "solver") cfg.solver = val;
    else if (key == "steps_per_hour") cfg.steps_per_hour = parse_num(val, key);
    else if (key == "grid_resolution_h") cfg.grid_resolution_h = parse_num(val, key);
    else if (key == "alpha") cfg.alpha = parse_num(val, key);
    else if (key == "kappa1") cfg.kappa1 = parse_num(val, key);
    else if (key == "kappa2") cfg.kappa2 = parse_num(val, key);
    else if (key == "delta") cfg.delta = parse_num(val, key);
    else if (key == "delta_t_hours") cfg.delta_t_hours = parse_int(val, key);
    else if (key == "use_tacl") cfg.use_tacl = parse_bool(val, key);
    else if (key == "use_time_mask") cfg.use_time_mask = parse_bool(val, key);
    else if (key == "use_ranking_loss") cfg.use_ranking_loss = parse_bool(val, key);
    else if (key == "ranking_include_self") cfg.ranking_include_self = parse_bool(val, key);
    else if (key == "epochs") cfg.epochs = parse_int(val, key);
    else if (key == "patience") cfg.patience = parse_int(val, key);
    else if (key == "batch_size") cfg.batch_size = parse_int(val, key);
    else if (key == "lr") cfg.lr = parse_num(val, key);
    else if (key == "weight_decay") cfg.weight_decay = parse_num(val, key);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(val, key));
    else if (key == "calibration_bins") cfg.calibration_bins = static_cast<int>(parse_int(val, key));
    else if (key == "field_samples") cfg.field_samples = parse_int(val, key);
    else if (key == "clusters") cfg.clusters = static_cast<int>(parse_int(val, key));
    else if (key == "phenotype_k") cfg.phenotype_k = parse_int(val, key);
    else if (key == "phenotype_grid") cfg.phenotype_grid = static_cast<int>(parse_int(val, key));
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.synthetic.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace trajsurv
