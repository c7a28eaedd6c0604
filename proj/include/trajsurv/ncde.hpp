#pragma once

#include <cstdint>
#include <vector>

#include "trajsurv/controlpath.hpp"
#include "trajsurv/nn.hpp"
#include "trajsurv/tensor.hpp"

namespace trajsurv {

enum class SolverMethod { euler, rk4 };

struct SolverConfig {
  SolverMethod method = SolverMethod::rk4;
  double steps_per_hour = 2.0;
  double grid_resolution_h = 1.0;  // latent trajectory sampling grid
};

// Encoder parameters: g_phi maps the initial augmented observation into the
// latent space; f_theta is the vector field whose output reshapes to a
// d_z x (d+1) matrix. Hidden activations are tanh; f_theta's final layer is
// tanh-bounded and linearly scaled to keep the CDE well-posed.
struct EncoderParams {
  Ffn g_phi;
  Ffn f_theta;
  std::int64_t latent_dim = 0;
  std::int64_t input_channels = 0;  // d + 1

  static EncoderParams create(std::int64_t input_channels, std::int64_t latent_dim,
                              std::int64_t hidden, Rng& rng, double field_scale = 1.0);
};

// Latent trajectory of one patient: solver states on the uniform grid (as
// plain values) plus tape-connected anchor states at observation times.
// Anchor times are always part of the solver step schedule, so anchor states
// are exact solver states, never interpolated.
struct LatentTrajectory {
  std::vector<double> grid_times;
  std::vector<std::vector<double>> grid_states;
  std::vector<double> anchor_times;
  std::vector<Tensor> anchor_states;

  const Tensor& final_state() const { return anchor_states.back(); }
};

// Solves z_t = z_0 + int_0^t f_theta(z_s) dX_s with z_0 = g_phi(X(0)) by
// fixed-step unrolling; gradients flow into both parameter sets.
LatentTrajectory encode(const ControlPath& path, const EncoderParams& params,
                        const SolverConfig& cfg);

// Lockstep batched variant used by training: all patients advance over the
// union of their step schedules, with finished patients frozen in place.
// Produces per-patient trajectories equivalent to encode() up to solver
// refinement (identical when the batch has a single patient).
std::vector<LatentTrajectory> encode_batch(const std::vector<const ControlPath*>& paths,
                                           const EncoderParams& params,
                                           const SolverConfig& cfg);

// dz/dt = f_theta(z) * dX/dt at a single state; plain-value helper for
// interpretation (no tape participation).
std::vector<double> latent_velocity(const std::vector<double>& z,
                                    const std::vector<double>& dxdt,
                                    const EncoderParams& params);

// f_theta(z) evaluated as a d_z x (d+1) row-major matrix, no tape.
std::vector<double> field_matrix(const std::vector<double>& z,
                                 const EncoderParams& params);

}  // namespace trajsurv
