#include "trajsurv/nn.hpp"

#include <cmath>

namespace trajsurv {

Tensor init_linear_weight(std::int64_t out_dim, std::int64_t in_dim, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_dim));
  std::vector<double> w(static_cast<std::size_t>(out_dim * in_dim));
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::from_vector(std::move(w), {out_dim, in_dim}, true);
}

Ffn Ffn::create(const std::vector<std::int64_t>& dims, Rng& rng, bool final_tanh,
                double final_scale) {
  if (dims.size() < 2) throw std::invalid_argument("Ffn: needs at least two dims");
  Ffn ffn;
  ffn.final_tanh = final_tanh;
  ffn.final_scale = final_scale;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    ffn.weights.push_back(init_linear_weight(dims[l + 1], dims[l], rng));
    ffn.biases.push_back(Tensor::zeros({dims[l + 1]}, true));
  }
  return ffn;
}

Tensor Ffn::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const bool last = (l + 1 == weights.size());
    if (!last || final_tanh) {
      h = linear_tanh(h, weights[l], biases[l]);
    } else {
      h = linear(h, weights[l], biases[l]);
    }
  }
  if (final_tanh && final_scale != 1.0) h = scale(h, final_scale);
  return h;
}

void append_ffn_params(const std::string& prefix, const Ffn& ffn,
                       std::vector<NamedParam>& out) {
  for (std::size_t l = 0; l < ffn.weights.size(); ++l) {
    out.push_back({prefix + ".w" + std::to_string(l), ffn.weights[l]});
    out.push_back({prefix + ".b" + std::to_string(l), ffn.biases[l]});
  }
}

AdamW::AdamW(std::vector<Tensor> params, double lr, double weight_decay,
             double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.data().size(), 0.0);
    v_.emplace_back(p.data().size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k].data();
    const auto& g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace trajsurv
