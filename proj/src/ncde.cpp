#include "trajsurv/ncde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajsurv {

namespace {

constexpr double kTimeTol = 1e-9;

// Step schedule on [0, t_end]: union of solver ticks, grid times, and knot
// (anchor) times. Knot values win ties so anchors appear exactly.
std::vector<double> build_schedule(const std::vector<double>& knot_times, double t_end,
                                   const SolverConfig& cfg) {
  struct Point {
    double t;
    bool knot;
  };
  std::vector<Point> pts;
  for (double t : knot_times) {
    if (t <= t_end + kTimeTol) pts.push_back({t, true});
  }
  const double dt_solver = 1.0 / cfg.steps_per_hour;
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt_solver;
    if (t > t_end + kTimeTol) break;
    pts.push_back({std::min(t, t_end), false});
  }
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * cfg.grid_resolution_h;
    if (t > t_end + kTimeTol) break;
    pts.push_back({std::min(t, t_end), false});
  }
  pts.push_back({t_end, false});
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.knot > b.knot;  // knot representative first within a tie group
  });
  std::vector<double> sched;
  for (const auto& p : pts) {
    if (sched.empty() || p.t - sched.back() > kTimeTol) sched.push_back(p.t);
  }
  return sched;
}

std::size_t locate(const std::vector<double>& sched, double t) {
  auto it = std::lower_bound(sched.begin(), sched.end(), t - kTimeTol);
  if (it == sched.end() || std::abs(*it - t) > kTimeTol) {
    throw std::logic_error("schedule point lookup failed");
  }
  return static_cast<std::size_t>(it - sched.begin());
}

Tensor const_tensor(const std::vector<double>& v) {
  return Tensor::from_vector(v, {static_cast<std::int64_t>(v.size())}, false);
}

}  // namespace

EncoderParams EncoderParams::create(std::int64_t input_channels, std::int64_t latent_dim,
                                    std::int64_t hidden, Rng& rng, double field_scale) {
  EncoderParams p;
  p.latent_dim = latent_dim;
  p.input_channels = input_channels;
  p.g_phi = Ffn::create({input_channels, hidden, latent_dim}, rng);
  p.f_theta = Ffn::create({latent_dim, hidden, hidden, latent_dim * input_channels}, rng,
                          /*final_tanh=*/true, field_scale);
  return p;
}

LatentTrajectory encode(const ControlPath& path, const EncoderParams& params,
                        const SolverConfig& cfg) {
  if (cfg.steps_per_hour < 1.0) {
    throw std::invalid_argument("solver requires steps_per_hour >= 1");
  }
  if (path.channels() != params.input_channels) {
    throw std::invalid_argument("encoder expects " +
                                std::to_string(params.input_channels) +
                                " input channels, path has " +
                                std::to_string(path.channels()));
  }
  const std::int64_t dz = params.latent_dim;
  const std::int64_t c = path.channels();
  const double t_end = path.t_end();

  auto x0 = path.eval(0.0).first;
  Tensor z = params.g_phi.forward(const_tensor(x0));

  LatentTrajectory traj;
  const auto sched = build_schedule(path.knot_times(), t_end, cfg);

  std::vector<double> xbuf(static_cast<std::size_t>(c));
  std::vector<double> dbuf(static_cast<std::size_t>(c));
  auto deriv_at = [&](double t) {
    path.eval(t, xbuf.data(), dbuf.data());
    return const_tensor(dbuf);
  };
  auto field_times = [&](const Tensor& state, const Tensor& dxdt) {
    Tensor f = params.f_theta.forward(state);
    return matvec_reshaped(f, dxdt, dz, c);
  };

  std::size_t next_knot = 0;
  std::size_t next_grid = 0;
  auto record_outputs = [&](double t) {
    const auto& knots = path.knot_times();
    if (next_knot < knots.size() && std::abs(knots[next_knot] - t) <= kTimeTol) {
      traj.anchor_times.push_back(knots[next_knot]);
      traj.anchor_states.push_back(z);
      ++next_knot;
    }
    const double g = static_cast<double>(next_grid) * cfg.grid_resolution_h;
    if (g <= t_end + kTimeTol && std::abs(g - t) <= kTimeTol) {
      traj.grid_times.push_back(t);
      traj.grid_states.push_back(z.data());
      ++next_grid;
    }
  };

  record_outputs(sched.front());
  for (std::size_t k = 0; k + 1 < sched.size(); ++k) {
    const double t = sched[k];
    const double h = sched[k + 1] - t;
    if (cfg.method == SolverMethod::euler) {
      Tensor k1 = field_times(z, deriv_at(t));
      z = add(z, scale(k1, h));
    } else {
      Tensor d1 = deriv_at(t);
      Tensor d2 = deriv_at(t + 0.5 * h);
      Tensor d3 = deriv_at(t + h);
      Tensor k1 = field_times(z, d1);
      Tensor k2 = field_times(add(z, scale(k1, 0.5 * h)), d2);
      Tensor k3 = field_times(add(z, scale(k2, 0.5 * h)), d2);
      Tensor k4 = field_times(add(z, scale(k3, h)), d3);
      Tensor sum = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
      z = add(z, scale(sum, h / 6.0));
    }
    for (double v : z.data()) {
      if (!std::isfinite(v)) {
        throw NumericError("NCDE state diverged at t=" + std::to_string(sched[k + 1]));
      }
    }
    record_outputs(sched[k + 1]);
  }
  return traj;
}

std::vector<LatentTrajectory> encode_batch(const std::vector<const ControlPath*>& paths,
                                           const EncoderParams& params,
                                           const SolverConfig& cfg) {
  if (paths.empty()) throw std::invalid_argument("encode_batch: empty batch");
  if (cfg.steps_per_hour < 1.0) {
    throw std::invalid_argument("solver requires steps_per_hour >= 1");
  }
  const std::int64_t n = static_cast<std::int64_t>(paths.size());
  const std::int64_t dz = params.latent_dim;
  const std::int64_t c = params.input_channels;
  for (const auto* p : paths) {
    if (p->channels() != c) {
      throw std::invalid_argument("encode_batch: inconsistent path channel count");
    }
  }
  // Patients sorted by descending end time keep the active set a prefix.
  std::vector<std::int64_t> order(paths.size());
  for (std::int64_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return paths[a]->t_end() > paths[b]->t_end();
  });

  double max_end = 0.0;
  std::vector<double> all_knots;
  for (const auto* p : paths) {
    max_end = std::max(max_end, p->t_end());
    all_knots.insert(all_knots.end(), p->knot_times().begin(), p->knot_times().end());
  }
  std::sort(all_knots.begin(), all_knots.end());
  const auto sched = build_schedule(all_knots, max_end, cfg);

  // z0 rows via one batched g_phi pass.
  std::vector<Tensor> x0_rows;
  x0_rows.reserve(paths.size());
  for (std::int64_t i = 0; i < n; ++i) {
    x0_rows.push_back(const_tensor(paths[order[i]]->eval(0.0).first));
  }
  Tensor z = params.g_phi.forward(stack_rows(x0_rows));

  std::vector<LatentTrajectory> out(paths.size());
  std::vector<std::size_t> next_knot(paths.size(), 0);
  std::vector<std::size_t> next_grid(paths.size(), 0);

  auto record_outputs = [&](double t) {
    for (std::int64_t r = 0; r < n; ++r) {
      const std::int64_t pi = order[r];
      const ControlPath& path = *paths[pi];
      if (t > path.t_end() + kTimeTol) continue;
      LatentTrajectory& traj = out[pi];
      const auto& knots = path.knot_times();
      std::size_t& nk = next_knot[pi];
      bool need_row = false;
      if (nk < knots.size() && std::abs(knots[nk] - t) <= kTimeTol) need_row = true;
      std::size_t& ng = next_grid[pi];
      const double g = static_cast<double>(ng) * cfg.grid_resolution_h;
      const bool grid_hit = g <= path.t_end() + kTimeTol && std::abs(g - t) <= kTimeTol;
      if (!need_row && !grid_hit) continue;
      if (need_row) {
        Tensor row = take_row(z, r);
        traj.anchor_times.push_back(knots[nk]);
        traj.anchor_states.push_back(row);
        ++nk;
        if (grid_hit) {
          traj.grid_times.push_back(t);
          traj.grid_states.push_back(row.data());
          ++ng;
        }
      } else {
        traj.grid_times.push_back(t);
        const double* zrow = z.data().data() + r * dz;
        traj.grid_states.emplace_back(zrow, zrow + dz);
        ++ng;
      }
    }
  };

  std::vector<double> xbuf(static_cast<std::size_t>(c));
  std::vector<double> dbuf(static_cast<std::size_t>(c));

  record_outputs(sched.front());
  for (std::size_t k = 0; k + 1 < sched.size(); ++k) {
    const double t = sched[k];
    const double t_next = sched[k + 1];
    const double h = t_next - t;
    // Active rows are those whose path still covers [t, t_next].
    std::int64_t active = 0;
    while (active < n && paths[order[active]]->t_end() >= t_next - kTimeTol) ++active;
    if (active == 0) break;

    auto deriv_rows = [&](double te) {
      std::vector<Tensor> rows;
      rows.reserve(static_cast<std::size_t>(active));
      for (std::int64_t r = 0; r < active; ++r) {
        paths[order[r]]->eval(te, xbuf.data(), dbuf.data());
        rows.push_back(const_tensor(dbuf));
      }
      return stack_rows(rows);
    };
    auto field_times = [&](const Tensor& state, const Tensor& dxdt) {
      Tensor f = params.f_theta.forward(state);
      return rowwise_matvec(f, dxdt, dz, c);
    };

    Tensor za = active == n ? z : slice_rows(z, 0, active);
    Tensor z_next;
    if (cfg.method == SolverMethod::euler) {
      Tensor k1 = field_times(za, deriv_rows(t));
      z_next = add(za, scale(k1, h));
    } else {
      Tensor d1 = deriv_rows(t);
      Tensor d2 = deriv_rows(t + 0.5 * h);
      Tensor d3 = deriv_rows(t_next);
      Tensor k1 = field_times(za, d1);
      Tensor k2 = field_times(add(za, scale(k1, 0.5 * h)), d2);
      Tensor k3 = field_times(add(za, scale(k2, 0.5 * h)), d2);
      Tensor k4 = field_times(add(za, scale(k3, h)), d3);
      Tensor sum = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
      z_next = add(za, scale(sum, h / 6.0));
    }
    z = active == n ? z_next : concat_rows(z_next, slice_rows(z, active, n));
    for (double v : z_next.data()) {
      if (!std::isfinite(v)) {
        throw NumericError("NCDE state diverged at t=" + std::to_string(t_next));
      }
    }
    record_outputs(t_next);
  }
  return out;
}

std::vector<double> field_matrix(const std::vector<double>& z,
                                 const EncoderParams& params) {
  Tensor f = params.f_theta.forward(const_tensor(z));
  return f.data();
}

std::vector<double> latent_velocity(const std::vector<double>& z,
                                    const std::vector<double>& dxdt,
                                    const EncoderParams& params) {
  if (static_cast<std::int64_t>(z.size()) != params.latent_dim ||
      static_cast<std::int64_t>(dxdt.size()) != params.input_channels) {
    throw std::invalid_argument(
        "latent_velocity: state/derivative sizes (" + std::to_string(z.size()) + "," +
        std::to_string(dxdt.size()) + ") do not match encoder dims (" +
        std::to_string(params.latent_dim) + "," + std::to_string(params.input_channels) +
        ")");
  }
  Tensor f = params.f_theta.forward(const_tensor(z));
  Tensor v = matvec_reshaped(f, const_tensor(dxdt), params.latent_dim,
                             params.input_channels);
  return v.data();
}

}  // namespace trajsurv
