#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trajsurv/errors.hpp"

namespace trajsurv {

// Minimal dense float64 tensor with reverse-mode automatic differentiation.
// Tensors are cheap handles onto shared nodes; operations record backward
// closures on the active Tape when any input participates in gradients.
// Recording is single-threaded per training step; tensors that do not
// require grad are immutable after construction.

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily on first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_vector(std::vector<double> data, Shape shape,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  const std::vector<double>& grad() const;
  double item() const;

  TensorNode* node() const { return node_.get(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

 private:
  std::shared_ptr<TensorNode> node_;
  friend Tensor make_tensor(Shape, std::vector<double>, bool);
};

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);

// ---------------------------------------------------------------------------
// Tape

class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    records_.push_back(std::move(backward_fn));
  }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Replays recorded operations in exact reverse order and consumes the tape.
  void replay_backward();

  static Tape* active();
  static void set_active(Tape* tape);

 private:
  std::vector<std::function<void()>> records_;
};

// RAII scope that makes a tape the active recording target.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape) : prev_(Tape::active()) { Tape::set_active(tape); }
  ~TapeScope() { Tape::set_active(prev_); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Runs backward from a scalar loss through the active tape, populating the
// grad buffers of every requires_grad leaf. The tape is consumed.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Operations. Unless stated otherwise, shapes must match exactly.
// Every op validates that its forward result is finite and throws
// NumericError naming the operation otherwise.

Tensor add(const Tensor& a, const Tensor& b);  // equal shapes, or b broadcast over leading dims
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
// y = x W^T + b with W:[out,in], b:[out]; x may be [in] or [batch,in].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// Fused tanh(x W^T + b); stores only the activation for backward.
Tensor linear_tanh(const Tensor& x, const Tensor& w, const Tensor& b);
// Treats f:[rows*cols] as a row-major matrix and returns f-as-matrix * v.
Tensor matvec_reshaped(const Tensor& f, const Tensor& v, std::int64_t rows,
                       std::int64_t cols);
// Row-wise batched variant: f:[n,rows*cols], v:[n,cols] -> [n,rows].
Tensor rowwise_matvec(const Tensor& f, const Tensor& v, std::int64_t rows,
                      std::int64_t cols);

Tensor concat(const Tensor& a, const Tensor& b);             // 1-D
Tensor slice(const Tensor& a, std::int64_t lo, std::int64_t hi);  // 1-D [lo,hi)
Tensor gather(const Tensor& a, const std::vector<std::int64_t>& idx);  // 1-D
Tensor stack_rows(const std::vector<Tensor>& rows);  // k vectors [d] -> [k,d]
Tensor slice_rows(const Tensor& m, std::int64_t lo, std::int64_t hi);  // [n,d] -> [hi-lo,d]
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor take_row(const Tensor& m, std::int64_t row);  // [n,d] -> [d]
Tensor flatten(const Tensor& a);                     // view copy as 1-D

Tensor reduce_sum(const Tensor& a);
Tensor reduce_mean(const Tensor& a);
Tensor logsumexp(const Tensor& a);  // 1-D -> scalar, max-shifted
Tensor l2_norm(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Time-aware contrastive loss over a batch of anchor states, fused into a
// single tape node. Z:[m,dz]; label_dist and mask are dense m*m row-major
// host-side constants (gradients never flow into labels or times).
// For each ordered pair (i,j), i != j, the denominator set is
// { k != i : label_dist[i,k] > label_dist[i,j] } plus j itself, and the
// masked log-probability terms are averaged with 1/m^2 normalization.
Tensor tacl_pairwise_loss(const Tensor& z, const std::vector<double>& label_dist,
                          const std::vector<double>& mask, double kappa1);

}  // namespace trajsurv
