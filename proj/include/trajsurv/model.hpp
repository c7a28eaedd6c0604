#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajsurv/ncde.hpp"
#include "trajsurv/survhead.hpp"

namespace trajsurv {

// Named parameter collection for g_phi, f_theta and G_eta.
struct ModelParams {
  EncoderParams encoder;
  RiskHeadParams head;
  std::int64_t feature_dim = 0;

  static ModelParams create(std::int64_t feature_dim, std::int64_t latent_dim,
                            std::int64_t hidden, std::int64_t head_hidden,
                            double field_scale, std::uint64_t seed);

  std::vector<NamedParam> named_params() const;
  std::vector<Tensor> param_tensors() const;

  // Deep value snapshot/restore (used to keep the best validation model).
  std::vector<std::vector<double>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<double>>& values);
};

// Checkpoint file: magic line, little-endian manifest length, JSON manifest
// (version, config hash, named shapes in order) and the concatenated float64
// payload in manifest order.
void save_checkpoint(const std::string& path, const ModelParams& model,
                     std::uint64_t config_hash);

// Loads into a model of identical architecture; shape or hash mismatches are
// configuration errors.
void load_checkpoint(const std::string& path, ModelParams& model,
                     std::uint64_t expected_config_hash);

std::uint64_t checkpoint_config_hash(const std::string& path);

}  // namespace trajsurv
