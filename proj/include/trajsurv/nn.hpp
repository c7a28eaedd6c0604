#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajsurv/rng.hpp"
#include "trajsurv/tensor.hpp"

namespace trajsurv {

// Feed-forward network with tanh hidden activations. The final layer is
// linear by default; with final_tanh set, the output also passes through
// tanh and is scaled by final_scale (used for the NCDE vector field, which
// needs a bounded right-hand side).
struct Ffn {
  std::vector<Tensor> weights;  // each [out,in]
  std::vector<Tensor> biases;   // each [out]
  bool final_tanh = false;
  double final_scale = 1.0;

  static Ffn create(const std::vector<std::int64_t>& dims, Rng& rng,
                    bool final_tanh = false, double final_scale = 1.0);

  Tensor forward(const Tensor& x) const;

  std::int64_t in_dim() const { return weights.front().dim(1); }
  std::int64_t out_dim() const { return weights.back().dim(0); }
  std::size_t layer_count() const { return weights.size(); }
};

// Weights initialized Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases zero.
Tensor init_linear_weight(std::int64_t out_dim, std::int64_t in_dim, Rng& rng);

struct NamedParam {
  std::string name;
  Tensor tensor;
};

void append_ffn_params(const std::string& prefix, const Ffn& ffn,
                       std::vector<NamedParam>& out);

// AdamW: adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace trajsurv
