#include "trajsurv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trajsurv/rng.hpp"
#include "trajsurv/tacl.hpp"

namespace trajsurv {

Cohort load_cohort(const RunConfig& cfg) {
  if (cfg.source == "synthetic") {
    SyntheticConfig scfg = cfg.synthetic;
    scfg.seed = cfg.seed;
    return generate_synthetic(scfg);
  }
  CsvSchema schema;
  std::stringstream ss(cfg.csv_features);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) schema.feature_names.push_back(name);
  }
  schema.window_h = cfg.synthetic.window_h;
  schema.min_observed = cfg.min_observed;
  return ingest_csv(cfg.csv_observations, cfg.csv_labels, cfg.csv_severity, schema);
}

PreparedCohort prepare_cohort(Cohort cohort, const RunConfig& cfg) {
  PreparedCohort out;
  split_cohort(cohort, cfg.train_frac, cfg.val_frac, cfg.seed);
  standardize(cohort);

  const PathScheme scheme = cfg.path_scheme();
  out.has_severity = true;
  for (auto& rec : cohort.records) {
    if (rec.severity.hours.empty()) out.has_severity = false;
  }
  for (auto& rec : cohort.records) {
    if (!rec.severity.hours.empty() && rec.severity.v.empty()) {
      rec.severity.v = severity_trend(rec.severity.s, cfg.delta_t_hours);
    }
  }
  out.paths.reserve(cohort.records.size());
  out.anchor_s.resize(cohort.records.size());
  out.anchor_v.resize(cohort.records.size());
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    auto& rec = cohort.records[i];
    const ObservationSeq filled = impute(rec.obs, cohort.stats);
    out.paths.push_back(ControlPath::build(filled, scheme));
    if (!rec.severity.hours.empty()) {
      for (double t : rec.obs.times) {
        const std::size_t h = rec.severity.nearest_hour_index(t);
        out.anchor_s[i].push_back(rec.severity.s[h]);
        out.anchor_v[i].push_back(rec.severity.v[h]);
      }
    }
  }
  out.train_idx = cohort.indices_of(kTrain);
  out.val_idx = cohort.indices_of(kVal);
  out.test_idx = cohort.indices_of(kTest);
  out.cohort = std::move(cohort);
  return out;
}

namespace {

// Event patients are spread round-robin over the epoch's batches so that
// every batch keeps at least one event whenever enough events exist.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& train,
                                                   const Cohort& cohort,
                                                   std::int64_t batch_size,
                                                   std::uint64_t epoch_seed) {
  std::vector<std::size_t> events, censored;
  std::vector<std::size_t> shuffled = train;
  Rng rng(epoch_seed);
  shuffle_in_place(shuffled, rng);
  for (auto i : shuffled) {
    (cohort.records[i].label.event ? events : censored).push_back(i);
  }
  const std::size_t n_batches =
      (train.size() + static_cast<std::size_t>(batch_size) - 1) /
      static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::size_t>> batches(n_batches);
  std::size_t b = 0;
  for (auto e : events) {
    batches[b % n_batches].push_back(e);
    ++b;
  }
  std::size_t c = 0;
  for (std::size_t bi = 0; bi < n_batches; ++bi) {
    while (batches[bi].size() < static_cast<std::size_t>(batch_size) && c < censored.size()) {
      batches[bi].push_back(censored[c++]);
    }
  }
  while (c < censored.size()) batches.back().push_back(censored[c++]);
  batches.erase(std::remove_if(batches.begin(), batches.end(),
                               [](const auto& v) { return v.empty(); }),
                batches.end());
  return batches;
}

Tensor batch_risks(const std::vector<LatentTrajectory>& trajs, const ModelParams& model) {
  std::vector<Tensor> finals;
  finals.reserve(trajs.size());
  for (const auto& t : trajs) finals.push_back(t.final_state());
  Tensor z = stack_rows(finals);
  return flatten(model.head.g_eta.forward(z));
}

AnchorSet collect_anchors(const PreparedCohort& data,
                          const std::vector<std::size_t>& batch,
                          const std::vector<LatentTrajectory>& trajs) {
  AnchorSet anchors;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t i = batch[b];
    const auto& traj = trajs[b];
    for (std::size_t a = 0; a < traj.anchor_states.size(); ++a) {
      anchors.states.push_back(traj.anchor_states[a]);
      anchors.times.push_back(traj.anchor_times[a]);
      anchors.s.push_back(data.anchor_s[i][a]);
      anchors.v.push_back(data.anchor_v[i][a]);
      anchors.patient_ids.push_back(static_cast<std::int64_t>(i));
    }
  }
  return anchors;
}

double validation_c_index(const PreparedCohort& data, const ModelParams& model,
                          const RunConfig& cfg) {
  if (data.val_idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto val_labels = data.cohort.labels_of(data.val_idx);
  const auto train_labels = data.cohort.labels_of(data.train_idx);
  std::vector<double> risks;
  {
    auto trajs = encode_subset(data, data.val_idx, model, cfg);
    std::vector<Tensor> finals;
    for (auto& t : trajs) finals.push_back(t.final_state());
    for (auto& f : finals) {
      risks.push_back(model.head.g_eta.forward(f).item());
    }
  }
  // Mean C-index over the three follow-up quartile horizons.
  const auto qs = metrics::follow_up_quartiles(val_labels);
  double sum = 0.0;
  int n_ok = 0;
  for (double tau : qs) {
    try {
      sum += metrics::c_index_ipcw(risks, train_labels, val_labels, tau);
      ++n_ok;
    } catch (const UndefinedMetricError&) {
    }
  }
  if (n_ok == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / n_ok;
}

}  // namespace

std::vector<LatentTrajectory> encode_subset(const PreparedCohort& data,
                                            const std::vector<std::size_t>& idx,
                                            const ModelParams& model,
                                            const RunConfig& cfg) {
  const SolverConfig solver = cfg.solver_config();
  std::vector<LatentTrajectory> out(idx.size());
  const std::size_t chunk = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::size_t end = std::min(idx.size(), start + chunk);
    std::vector<const ControlPath*> paths;
    for (std::size_t k = start; k < end; ++k) paths.push_back(&data.paths[idx[k]]);
    auto trajs = encode_batch(paths, model.encoder, solver);
    for (std::size_t k = start; k < end; ++k) out[k] = std::move(trajs[k - start]);
  }
  return out;
}

std::vector<double> risk_scores(const PreparedCohort& data,
                                const std::vector<std::size_t>& idx,
                                const ModelParams& model, const RunConfig& cfg) {
  auto trajs = encode_subset(data, idx, model, cfg);
  std::vector<double> risks;
  risks.reserve(idx.size());
  for (const auto& t : trajs) {
    risks.push_back(model.head.g_eta.forward(t.final_state()).item());
  }
  return risks;
}

TrainResult train_model(const PreparedCohort& data, const RunConfig& cfg) {
  if (data.train_idx.empty()) throw ConfigError("training split is empty");
  if (cfg.use_tacl && !data.has_severity) {
    throw ConfigError("use_tacl requires severity labels for every patient");
  }
  TrainResult result;
  result.model = ModelParams::create(static_cast<std::int64_t>(data.cohort.feature_names.size()),
                                     cfg.d_z, cfg.hidden, cfg.head_hidden, cfg.field_scale,
                                     cfg.seed);
  AdamW opt(result.model.param_tensors(), cfg.lr, cfg.weight_decay);
  const SolverConfig solver = cfg.solver_config();

  auto best_values = result.model.snapshot_values();
  double best_val = -std::numeric_limits<double>::infinity();
  std::int64_t best_epoch = -1;
  std::int64_t stale = 0;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = make_batches(data.train_idx, data.cohort, cfg.batch_size,
                                      derive_seed(cfg.seed, 0xba7c0000u + epoch));
    double sum_total = 0.0, sum_pl = 0.0, sum_pr = 0.0, sum_tacl = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      Tape tape;
      TapeScope scope(&tape);
      try {
        std::vector<const ControlPath*> paths;
        std::vector<SurvivalLabel> labels;
        for (auto i : batch) {
          paths.push_back(&data.paths[i]);
          labels.push_back(data.cohort.records[i].label);
        }
        auto trajs = encode_batch(paths, result.model.encoder, solver);
        Tensor risks = batch_risks(trajs, result.model);
        Tensor l_pl = partial_likelihood_loss(risks, labels);
        Tensor l_surv = l_pl;
        Tensor l_pr = Tensor::scalar(0.0);
        if (cfg.use_ranking_loss) {
          l_pr = ranking_loss(risks, labels, cfg.ranking_include_self);
          l_surv = add(l_pl, l_pr);
        }
        Tensor l_tacl = Tensor::scalar(0.0);
        Tensor loss = l_surv;
        if (cfg.use_tacl) {
          AnchorSet anchors = collect_anchors(data, batch, trajs);
          l_tacl = tacl_loss(anchors, cfg.kappa1, cfg.kappa2, cfg.delta, cfg.use_time_mask);
          loss = total_loss(l_surv, l_tacl, cfg.alpha);
        }
        backward(loss);
        opt.step();
        opt.zero_grad();
        sum_total += loss.item();
        sum_pl += l_pl.item();
        sum_pr += l_pr.item();
        sum_tacl += l_tacl.item();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(bi) + ")");
      }
    }
    EpochLog log;
    log.epoch = epoch;
    const double nb = static_cast<double>(batches.size());
    log.loss_total = sum_total / nb;
    log.loss_pl = sum_pl / nb;
    log.loss_pr = sum_pr / nb;
    log.loss_tacl = sum_tacl / nb;
    log.val_c_index = validation_c_index(data, result.model, cfg);
    result.logs.push_back(log);

    if (!std::isnan(log.val_c_index) && log.val_c_index > best_val) {
      best_val = log.val_c_index;
      best_epoch = epoch;
      best_values = result.model.snapshot_values();
      stale = 0;
    } else {
      ++stale;
      if (stale >= cfg.patience) break;
    }
  }
  if (best_epoch >= 0) {
    result.model.restore_values(best_values);
  }
  result.best_epoch = best_epoch;
  result.best_val = best_epoch >= 0 ? best_val : std::numeric_limits<double>::quiet_NaN();
  return result;
}

EvalOutputs evaluate_model(const PreparedCohort& data, const ModelParams& model,
                           const RunConfig& cfg, bool use_oracle_risk) {
  EvalOutputs out;
  const auto& test_idx = data.test_idx;
  if (test_idx.empty()) throw DataError("evaluate: empty test split");
  const auto test_labels = data.cohort.labels_of(test_idx);
  const auto train_labels = data.cohort.labels_of(data.train_idx);

  std::vector<double> train_risks, test_risks;
  std::vector<LatentTrajectory> test_trajs;
  if (use_oracle_risk) {
    for (auto i : data.train_idx) {
      const double r = data.cohort.records[i].oracle_risk;
      if (std::isnan(r)) throw DataError("oracle risk requested but not available");
      train_risks.push_back(r);
    }
    for (auto i : test_idx) test_risks.push_back(data.cohort.records[i].oracle_risk);
  } else {
    train_risks = risk_scores(data, data.train_idx, model, cfg);
    test_trajs = encode_subset(data, test_idx, model, cfg);
    for (const auto& t : test_trajs) {
      test_risks.push_back(model.head.g_eta.forward(t.final_state()).item());
    }
  }

  const BaselineHazard baseline = breslow_baseline(train_risks, train_labels);
  const auto qs = metrics::follow_up_quartiles(test_labels);
  std::vector<double> surv_probs(test_idx.size() * 3);
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    for (int q = 0; q < 3; ++q) {
      surv_probs[i * 3 + q] = predict_survival(test_risks[i], baseline, qs[q]);
    }
  }
  out.report = metrics::quartile_eval(test_risks, surv_probs, train_labels, test_labels);
  out.test_risks = test_risks;

  for (int q = 0; q < 3; ++q) {
    std::vector<double> probs(test_idx.size());
    for (std::size_t i = 0; i < test_idx.size(); ++i) probs[i] = surv_probs[i * 3 + q];
    out.calibration.push_back(
        metrics::calibration_bins(probs, test_labels, qs[q], cfg.calibration_bins));
  }

  // Hourly clinical-alignment diagnostic over the test split.
  if (data.has_severity && !use_oracle_risk) {
    const std::int64_t hours = static_cast<std::int64_t>(std::floor(data.cohort.window_h));
    for (std::int64_t hh = 0; hh <= hours; ++hh) {
      const double t = static_cast<double>(hh);
      AlignmentRow row;
      row.hour = t;
      std::vector<std::vector<double>> latents, sev, trend;
      for (std::size_t k = 0; k < test_idx.size(); ++k) {
        const auto& traj = test_trajs[k];
        const auto& rec = data.cohort.records[test_idx[k]];
        bool found = false;
        for (std::size_t g = 0; g < traj.grid_times.size(); ++g) {
          if (std::abs(traj.grid_times[g] - t) < 1e-9) {
            latents.push_back(traj.grid_states[g]);
            found = true;
            break;
          }
        }
        if (!found) continue;
        const std::size_t sh = rec.severity.nearest_hour_index(t);
        sev.push_back(rec.severity.s[sh]);
        trend.push_back(rec.severity.v[sh]);
      }
      row.n = static_cast<std::int64_t>(latents.size());
      if (row.n >= 3) {
        row.rho_severity = metrics::alignment_spearman(latents, sev);
        row.rho_trend = metrics::alignment_spearman(latents, trend);
      }
      out.alignment.push_back(row);
    }
  }
  return out;
}

double mean_alignment(const std::vector<AlignmentRow>& rows, double hour_lo,
                      double hour_hi) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.hour < hour_lo || r.hour > hour_hi || !r.rho_severity) continue;
    sum += *r.rho_severity;
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

InterpretOutputs interpret_model(const PreparedCohort& data, const ModelParams& model,
                                 const RunConfig& cfg, bool with_phenotype) {
  InterpretOutputs out;
  const auto& idx = data.test_idx.empty() ? data.train_idx : data.test_idx;
  auto trajs = encode_subset(data, idx, model, cfg);
  std::vector<interpret::StateSeq> grids;
  grids.reserve(trajs.size());
  for (auto& t : trajs) grids.push_back(t.grid_states);
  out.field = interpret::average_field(grids, model.encoder, cfg.field_samples,
                                       derive_seed(cfg.seed, 0xf1e1du));
  out.importance = interpret::feature_importance(out.field);
  out.relevance = interpret::feature_relevance(out.field);

  if (with_phenotype && data.has_severity) {
    std::vector<std::vector<double>> anchor_states;
    std::vector<std::vector<double>> anchor_components;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& traj = trajs[k];
      for (std::size_t a = 0; a < traj.anchor_states.size(); ++a) {
        anchor_states.push_back(traj.anchor_states[a].data());
        const auto& s = data.anchor_s[idx[k]][a];
        anchor_components.push_back(std::vector<double>(s.begin() + 1, s.end()));
      }
    }
    if (!anchor_states.empty()) {
      const auto xy = interpret::project_2d(anchor_states);
      double lo_x = xy[0][0], hi_x = xy[0][0], lo_y = xy[0][1], hi_y = xy[0][1];
      for (const auto& p : xy) {
        lo_x = std::min(lo_x, p[0]);
        hi_x = std::max(hi_x, p[0]);
        lo_y = std::min(lo_y, p[1]);
        hi_y = std::max(hi_y, p[1]);
      }
      std::vector<std::pair<double, double>> probes;
      const int g = cfg.phenotype_grid;
      for (int a = 0; a < g; ++a) {
        for (int b = 0; b < g; ++b) {
          probes.emplace_back(lo_x + (hi_x - lo_x) * a / (g - 1),
                              lo_y + (hi_y - lo_y) * b / (g - 1));
        }
      }
      out.phenotype = interpret::phenotype_map(xy, anchor_components, probes,
                                               cfg.phenotype_k);
    }
  }
  return out;
}

ClusterOutputs cluster_model(const PreparedCohort& data, const ModelParams& model,
                             const RunConfig& cfg, int n_clusters) {
  ClusterOutputs out;
  out.patient_idx = data.test_idx.empty() ? data.train_idx : data.test_idx;
  auto trajs = encode_subset(data, out.patient_idx, model, cfg);
  std::vector<interpret::StateSeq> grids;
  grids.reserve(trajs.size());
  for (auto& t : trajs) grids.push_back(t.grid_states);
  out.result = interpret::cluster_trajectories(grids, n_clusters,
                                               derive_seed(cfg.seed, 0xc1a5u));
  std::vector<SeveritySeries> sev;
  std::vector<SurvivalLabel> labels;
  for (auto i : out.patient_idx) {
    sev.push_back(data.cohort.records[i].severity);
    labels.push_back(data.cohort.records[i].label);
  }
  if (data.has_severity) {
    interpret::attach_cluster_profiles(out.result, sev, labels);
  }
  return out;
}

}  // namespace trajsurv
