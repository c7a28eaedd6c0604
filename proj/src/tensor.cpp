#include "trajsurv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace trajsurv {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_finite(const char* op, const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  if (std::isfinite(acc)) return;
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite result in op '") + op + "'");
    }
  }
}

bool tracked(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Fixed-order dot product with four accumulators; deterministic per build.
inline double dot(const double* a, const double* b, std::int64_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double a, const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

const std::vector<double>* out_grad(const Tensor& out) {
  TensorNode* n = out.node();
  if (n->grad.empty()) return nullptr;
  return &n->grad;
}

double* acc_grad(const Tensor& t) {
  t.node()->ensure_grad();
  return t.node()->grad.data();
}

}  // namespace

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(data);
  t.node_->requires_grad = requires_grad;
  if (shape_numel(t.node_->shape) != static_cast<std::int64_t>(t.node_->value.size())) {
    throw std::invalid_argument("tensor shape " + shape_str(t.node_->shape) +
                                " does not match buffer length " +
                                std::to_string(t.node_->value.size()));
  }
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                     requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v),
                     requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

Tensor Tensor::from_vector(std::vector<double> data, Shape shape, bool requires_grad) {
  return make_tensor(std::move(shape), std::move(data), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  require(numel() == 1, "item() requires a single-element tensor, got shape " +
                            shape_str(shape()));
  return node_->value[0];
}

Tape* Tape::active() { return g_active_tape; }
void Tape::set_active(Tape* tape) { g_active_tape = tape; }

void Tape::replay_backward() {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  records_.clear();
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1,
          "backward() requires a scalar loss");
  Tape* tape = Tape::active();
  require(tape != nullptr, "backward() requires an active tape");
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  tape->replay_backward();
}

// ---------------------------------------------------------------------------
// Elementwise with suffix broadcasting: b may have a shape equal to a trailing
// suffix of a's shape; it is then repeated over the leading dimensions.

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(const char* name, EwKind kind, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool suffix = sb.size() <= sa.size() &&
                      std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!suffix) {
    throw std::invalid_argument(std::string(name) + ": shapes " + shape_str(sa) +
                                " and " + shape_str(sb) + " do not conform");
  }
  const std::int64_t n = a.numel();
  const std::int64_t bn = b.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  switch (kind) {
    case EwKind::Add:
      for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i % bn];
      break;
    case EwKind::Sub:
      for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i % bn];
      break;
    case EwKind::Mul:
      for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i % bn];
      break;
  }
  check_finite(name, out);
  Tensor y = make_tensor(sa, std::move(out), tracked({&a, &b}));
  if (y.requires_grad()) {
    Tape::active()->record([a, b, y, kind, n, bn]() {
      const auto* g = out_grad(y);
      if (!g) return;
      const double* pg = g->data();
      if (a.requires_grad()) {
        double* ga = acc_grad(a);
        const double* pb2 = b.data().data();
        switch (kind) {
          case EwKind::Add:
          case EwKind::Sub:
            for (std::int64_t i = 0; i < n; ++i) ga[i] += pg[i];
            break;
          case EwKind::Mul:
            for (std::int64_t i = 0; i < n; ++i) ga[i] += pg[i] * pb2[i % bn];
            break;
        }
      }
      if (b.requires_grad()) {
        double* gb = acc_grad(b);
        const double* pa2 = a.data().data();
        switch (kind) {
          case EwKind::Add:
            for (std::int64_t i = 0; i < n; ++i) gb[i % bn] += pg[i];
            break;
          case EwKind::Sub:
            for (std::int64_t i = 0; i < n; ++i) gb[i % bn] -= pg[i];
            break;
          case EwKind::Mul:
            for (std::int64_t i = 0; i < n; ++i) gb[i % bn] += pg[i] * pa2[i];
            break;
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise("add", EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise("sub", EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise("mul", EwKind::Mul, a, b); }

Tensor scale(const Tensor& a, double c) {
  const std::int64_t n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] * c;
  check_finite("scale", out);
  Tensor y = make_tensor(a.shape(), std::move(out), tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, c, n]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      for (std::int64_t i = 0; i < n; ++i) ga[i] += c * (*g)[i];
    });
  }
  return y;
}

Tensor add_scalar(const Tensor& a, double c) {
  const std::int64_t n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] + c;
  check_finite("add_scalar", out);
  Tensor y = make_tensor(a.shape(), std::move(out), tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, n]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[i];
    });
  }
  return y;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Matrix ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2,
          "matmul: expected 2-D operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions differ, " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      axpy(pa[i * k + p], pb + p * n, crow, n);
    }
  }
  check_finite("matmul", out);
  Tensor y = make_tensor({m, n}, std::move(out), tracked({&a, &b}));
  if (y.requires_grad()) {
    Tape::active()->record([a, b, y, m, k, n]() {
      const auto* g = out_grad(y);
      if (!g) return;
      const double* pg = g->data();
      if (a.requires_grad()) {
        double* ga = acc_grad(a);
        const double* pb2 = b.data().data();
        for (std::int64_t i = 0; i < m; ++i) {
          for (std::int64_t p = 0; p < k; ++p) {
            ga[i * k + p] += dot(pg + i * n, pb2 + p * n, n);
          }
        }
      }
      if (b.requires_grad()) {
        double* gb = acc_grad(b);
        const double* pa2 = a.data().data();
        for (std::int64_t i = 0; i < m; ++i) {
          for (std::int64_t p = 0; p < k; ++p) {
            axpy(pa2[i * k + p], pg + i * n, gb + p * n, n);
          }
        }
      }
    });
  }
  return y;
}

namespace {

// Shared forward/backward for linear and linear_tanh. x: [in] or [batch,in].
Tensor linear_impl(const char* name, const Tensor& x, const Tensor& w, const Tensor& b,
                   bool with_tanh) {
  require(w.ndim() == 2, std::string(name) + ": weight must be 2-D, got " +
                             shape_str(w.shape()));
  const std::int64_t out_dim = w.dim(0), in_dim = w.dim(1);
  require(b.ndim() == 1 && b.dim(0) == out_dim,
          std::string(name) + ": bias shape " + shape_str(b.shape()) +
              " does not match weight " + shape_str(w.shape()));
  const bool batched = x.ndim() == 2;
  const std::int64_t rows = batched ? x.dim(0) : 1;
  const std::int64_t xin = batched ? x.dim(1) : x.dim(0);
  if (xin != in_dim) {
    throw std::invalid_argument(std::string(name) + ": input shape " +
                                shape_str(x.shape()) + " does not match weight " +
                                shape_str(w.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim));
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pbias = b.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xrow = px + r * in_dim;
    double* yrow = out.data() + r * out_dim;
    for (std::int64_t o = 0; o < out_dim; ++o) {
      double v = pbias[o] + dot(xrow, pw + o * in_dim, in_dim);
      yrow[o] = with_tanh ? std::tanh(v) : v;
    }
  }
  check_finite(name, out);
  Shape yshape = batched ? Shape{rows, out_dim} : Shape{out_dim};
  Tensor y = make_tensor(std::move(yshape), std::move(out), tracked({&x, &w, &b}));
  if (y.requires_grad()) {
    Tape::active()->record([x, w, b, y, rows, in_dim, out_dim, with_tanh]() {
      const auto* g = out_grad(y);
      if (!g) return;
      // For tanh the pre-activation gradient is g * (1 - y^2); y is stored.
      std::vector<double> gpre;
      const double* pg;
      if (with_tanh) {
        gpre.resize(g->size());
        const double* py = y.data().data();
        for (std::size_t i = 0; i < g->size(); ++i) {
          gpre[i] = (*g)[i] * (1.0 - py[i] * py[i]);
        }
        pg = gpre.data();
      } else {
        pg = g->data();
      }
      if (x.requires_grad()) {
        double* gx = acc_grad(x);
        const double* pw2 = w.data().data();
        for (std::int64_t r = 0; r < rows; ++r) {
          double* gxrow = gx + r * in_dim;
          const double* grow = pg + r * out_dim;
          for (std::int64_t o = 0; o < out_dim; ++o) {
            axpy(grow[o], pw2 + o * in_dim, gxrow, in_dim);
          }
        }
      }
      if (w.requires_grad()) {
        double* gw = acc_grad(w);
        const double* px2 = x.data().data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* xrow = px2 + r * in_dim;
          const double* grow = pg + r * out_dim;
          for (std::int64_t o = 0; o < out_dim; ++o) {
            axpy(grow[o], xrow, gw + o * in_dim, in_dim);
          }
        }
      }
      if (b.requires_grad()) {
        double* gb = acc_grad(b);
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* grow = pg + r * out_dim;
          for (std::int64_t o = 0; o < out_dim; ++o) gb[o] += grow[o];
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return linear_impl("linear", x, w, b, false);
}

Tensor linear_tanh(const Tensor& x, const Tensor& w, const Tensor& b) {
  return linear_impl("linear_tanh", x, w, b, true);
}

Tensor matvec_reshaped(const Tensor& f, const Tensor& v, std::int64_t rows,
                       std::int64_t cols) {
  require(f.ndim() == 1 && f.numel() == rows * cols,
          "matvec_reshaped: field shape " + shape_str(f.shape()) +
              " does not reshape to [" + std::to_string(rows) + "," +
              std::to_string(cols) + "]");
  require(v.ndim() == 1 && v.dim(0) == cols,
          "matvec_reshaped: vector shape " + shape_str(v.shape()) +
              " does not match column count " + std::to_string(cols));
  std::vector<double> out(static_cast<std::size_t>(rows));
  const double* pf = f.data().data();
  const double* pv = v.data().data();
  for (std::int64_t i = 0; i < rows; ++i) out[i] = dot(pf + i * cols, pv, cols);
  check_finite("matvec_reshaped", out);
  Tensor y = make_tensor({rows}, std::move(out), tracked({&f, &v}));
  if (y.requires_grad()) {
    Tape::active()->record([f, v, y, rows, cols]() {
      const auto* g = out_grad(y);
      if (!g) return;
      if (f.requires_grad()) {
        double* gf = acc_grad(f);
        const double* pv2 = v.data().data();
        for (std::int64_t i = 0; i < rows; ++i) {
          axpy((*g)[i], pv2, gf + i * cols, cols);
        }
      }
      if (v.requires_grad()) {
        double* gv = acc_grad(v);
        const double* pf2 = f.data().data();
        for (std::int64_t i = 0; i < rows; ++i) {
          axpy((*g)[i], pf2 + i * cols, gv, cols);
        }
      }
    });
  }
  return y;
}

Tensor rowwise_matvec(const Tensor& f, const Tensor& v, std::int64_t rows,
                      std::int64_t cols) {
  require(f.ndim() == 2 && f.dim(1) == rows * cols,
          "rowwise_matvec: field shape " + shape_str(f.shape()) +
              " does not reshape row-wise to [" + std::to_string(rows) + "," +
              std::to_string(cols) + "]");
  require(v.ndim() == 2 && v.dim(0) == f.dim(0) && v.dim(1) == cols,
          "rowwise_matvec: vector shape " + shape_str(v.shape()) +
              " does not match field " + shape_str(f.shape()));
  const std::int64_t n = f.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n * rows));
  const double* pf = f.data().data();
  const double* pv = v.data().data();
  for (std::int64_t r = 0; r < n; ++r) {
    const double* frow = pf + r * rows * cols;
    const double* vrow = pv + r * cols;
    double* yrow = out.data() + r * rows;
    for (std::int64_t i = 0; i < rows; ++i) yrow[i] = dot(frow + i * cols, vrow, cols);
  }
  check_finite("rowwise_matvec", out);
  Tensor y = make_tensor({n, rows}, std::move(out), tracked({&f, &v}));
  if (y.requires_grad()) {
    Tape::active()->record([f, v, y, n, rows, cols]() {
      const auto* g = out_grad(y);
      if (!g) return;
      const double* pg = g->data();
      if (f.requires_grad()) {
        double* gf = acc_grad(f);
        const double* pv2 = v.data().data();
        for (std::int64_t r = 0; r < n; ++r) {
          const double* vrow = pv2 + r * cols;
          const double* grow = pg + r * rows;
          double* gfrow = gf + r * rows * cols;
          for (std::int64_t i = 0; i < rows; ++i) axpy(grow[i], vrow, gfrow + i * cols, cols);
        }
      }
      if (v.requires_grad()) {
        double* gv = acc_grad(v);
        const double* pf2 = f.data().data();
        for (std::int64_t r = 0; r < n; ++r) {
          const double* frow = pf2 + r * rows * cols;
          const double* grow = pg + r * rows;
          double* gvrow = gv + r * cols;
          for (std::int64_t i = 0; i < rows; ++i) axpy(grow[i], frow + i * cols, gvrow, cols);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor concat(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 1 && b.ndim() == 1, "concat: expects 1-D tensors");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(a.numel() + b.numel()));
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Tensor y = make_tensor({a.numel() + b.numel()}, std::move(out), tracked({&a, &b}));
  if (y.requires_grad()) {
    const std::int64_t na = a.numel(), nb = b.numel();
    Tape::active()->record([a, b, y, na, nb]() {
      const auto* g = out_grad(y);
      if (!g) return;
      if (a.requires_grad()) {
        double* ga = acc_grad(a);
        for (std::int64_t i = 0; i < na; ++i) ga[i] += (*g)[i];
      }
      if (b.requires_grad()) {
        double* gb = acc_grad(b);
        for (std::int64_t i = 0; i < nb; ++i) gb[i] += (*g)[na + i];
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& a, std::int64_t lo, std::int64_t hi) {
  require(a.ndim() == 1, "slice: expects a 1-D tensor");
  require(0 <= lo && lo <= hi && hi <= a.numel(), "slice: range out of bounds");
  std::vector<double> out(a.data().begin() + lo, a.data().begin() + hi);
  Tensor y = make_tensor({hi - lo}, std::move(out), tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, lo, hi]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      for (std::int64_t i = lo; i < hi; ++i) ga[i] += (*g)[i - lo];
    });
  }
  return y;
}

Tensor gather(const Tensor& a, const std::vector<std::int64_t>& idx) {
  require(a.ndim() == 1, "gather: expects a 1-D tensor");
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < a.numel(), "gather: index out of range");
    out[k] = a.data()[static_cast<std::size_t>(idx[k])];
  }
  Tensor y = make_tensor({static_cast<std::int64_t>(idx.size())}, std::move(out),
                         tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, idx]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      for (std::size_t k = 0; k < idx.size(); ++k) ga[idx[k]] += (*g)[k];
    });
  }
  return y;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "stack_rows: needs at least one row");
  const std::int64_t d = rows[0].numel();
  bool any_grad = false;
  for (const auto& r : rows) {
    require(r.ndim() == 1 && r.numel() == d,
            "stack_rows: all rows must be 1-D of equal length");
    if (r.requires_grad()) any_grad = true;
  }
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  std::vector<double> out(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy(rows[i].data().begin(), rows[i].data().end(), out.begin() + i * d);
  }
  Tensor y = make_tensor({n, d}, std::move(out), Tape::active() != nullptr && any_grad);
  if (y.requires_grad()) {
    Tape::active()->record([rows, y, n, d]() {
      const auto* g = out_grad(y);
      if (!g) return;
      for (std::int64_t i = 0; i < n; ++i) {
        if (!rows[i].requires_grad()) continue;
        double* gr = acc_grad(rows[i]);
        for (std::int64_t j = 0; j < d; ++j) gr[j] += (*g)[i * d + j];
      }
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& m, std::int64_t lo, std::int64_t hi) {
  require(m.ndim() == 2, "slice_rows: expects a 2-D tensor");
  require(0 <= lo && lo <= hi && hi <= m.dim(0), "slice_rows: range out of bounds");
  const std::int64_t d = m.dim(1);
  std::vector<double> out(m.data().begin() + lo * d, m.data().begin() + hi * d);
  Tensor y = make_tensor({hi - lo, d}, std::move(out), tracked({&m}));
  if (y.requires_grad()) {
    Tape::active()->record([m, y, lo, hi, d]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* gm = acc_grad(m);
      const std::int64_t n = (hi - lo) * d;
      for (std::int64_t i = 0; i < n; ++i) gm[lo * d + i] += (*g)[i];
    });
  }
  return y;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require(top.ndim() == 2 && bottom.ndim() == 2 && top.dim(1) == bottom.dim(1),
          "concat_rows: column counts differ, " + shape_str(top.shape()) + " vs " +
              shape_str(bottom.shape()));
  const std::int64_t d = top.dim(1);
  std::vector<double> out;
  out.reserve(top.data().size() + bottom.data().size());
  out.insert(out.end(), top.data().begin(), top.data().end());
  out.insert(out.end(), bottom.data().begin(), bottom.data().end());
  Tensor y = make_tensor({top.dim(0) + bottom.dim(0), d}, std::move(out),
                         tracked({&top, &bottom}));
  if (y.requires_grad()) {
    const std::int64_t nt = top.numel(), nb = bottom.numel();
    Tape::active()->record([top, bottom, y, nt, nb]() {
      const auto* g = out_grad(y);
      if (!g) return;
      if (top.requires_grad()) {
        double* gt = acc_grad(top);
        for (std::int64_t i = 0; i < nt; ++i) gt[i] += (*g)[i];
      }
      if (bottom.requires_grad()) {
        double* gb = acc_grad(bottom);
        for (std::int64_t i = 0; i < nb; ++i) gb[i] += (*g)[nt + i];
      }
    });
  }
  return y;
}

Tensor take_row(const Tensor& m, std::int64_t row) {
  require(m.ndim() == 2, "take_row: expects a 2-D tensor");
  require(0 <= row && row < m.dim(0), "take_row: row out of range");
  const std::int64_t d = m.dim(1);
  std::vector<double> out(m.data().begin() + row * d, m.data().begin() + (row + 1) * d);
  Tensor y = make_tensor({d}, std::move(out), tracked({&m}));
  if (y.requires_grad()) {
    Tape::active()->record([m, y, row, d]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* gm = acc_grad(m);
      for (std::int64_t j = 0; j < d; ++j) gm[row * d + j] += (*g)[j];
    });
  }
  return y;
}

Tensor flatten(const Tensor& a) {
  std::vector<double> out = a.data();
  Tensor y = make_tensor({a.numel()}, std::move(out), tracked({&a}));
  if (y.requires_grad()) {
    const std::int64_t n = a.numel();
    Tape::active()->record([a, y, n]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce_sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  if (!std::isfinite(s)) check_finite("reduce_sum", {s});
  Tensor y = make_tensor({1}, {s}, tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      const std::int64_t n = a.numel();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[0];
    });
  }
  return y;
}

Tensor reduce_mean(const Tensor& a) {
  require(a.numel() > 0, "reduce_mean: empty tensor");
  return scale(reduce_sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor logsumexp(const Tensor& a) {
  require(a.ndim() == 1 && a.numel() > 0, "logsumexp: expects a non-empty 1-D tensor");
  const auto& x = a.data();
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  const double y_val = m + std::log(s);
  check_finite("logsumexp", {y_val});
  Tensor y = make_tensor({1}, {y_val}, tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, y_val]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      const auto& x2 = a.data();
      for (std::size_t i = 0; i < x2.size(); ++i) {
        ga[i] += (*g)[0] * std::exp(x2[i] - y_val);
      }
    });
  }
  return y;
}

Tensor l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  const double y_val = std::sqrt(s);
  check_finite("l2_norm", {y_val});
  Tensor y = make_tensor({1}, {y_val}, tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, y_val]() {
      const auto* g = out_grad(y);
      if (!g || y_val == 0.0) return;
      double* ga = acc_grad(a);
      const auto& x = a.data();
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += (*g)[0] * x[i] / y_val;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

namespace {

template <typename Fwd, typename Bwd>
Tensor pointwise(const char* name, const Tensor& a, Fwd fwd, Bwd bwd_factor) {
  const std::int64_t n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data().data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
  check_finite(name, out);
  Tensor y = make_tensor(a.shape(), std::move(out), tracked({&a}));
  if (y.requires_grad()) {
    Tape::active()->record([a, y, bwd_factor, n]() {
      const auto* g = out_grad(y);
      if (!g) return;
      double* ga = acc_grad(a);
      const double* px = a.data().data();
      const double* py = y.data().data();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[i] * bwd_factor(px[i], py[i]);
    });
  }
  return y;
}

}  // namespace

Tensor exp(const Tensor& a) {
  return pointwise("exp", a, [](double x) { return std::exp(x); },
                   [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return pointwise("log", a, [](double x) { return std::log(x); },
                   [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  return pointwise("tanh", a, [](double x) { return std::tanh(x); },
                   [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return pointwise("sigmoid", a,
                   [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                   [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return pointwise("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Fused time-aware contrastive loss.
//
// L = -(1/m^2) sum_{i != j} mask[i,j] * ( sim_ij/k1 - log sum_{k in D_ij} e_ik )
// with sim = -||z_i - z_k||_2, e_ik = exp(sim_ik/k1) and
// D_ij = { k != i : ld[i,k] > ld[i,j] } U {j}.
//
// Because D_ij depends only on constant label distances, the loss is smooth
// in z; the sets are materialized per row i by sorting on label distance, so
// every denominator is a strict-prefix sum plus the forced self term.

namespace {

struct TaclWork {
  std::int64_t m = 0;
  std::vector<double> dist;    // m*m pairwise distances
  std::vector<double> e;       // exp(-dist/k1)
  std::vector<double> denom;   // per (i,j) denominator sums
  std::vector<std::int32_t> order;  // per i: m-1 indices sorted by label_dist desc
  std::vector<std::int32_t> prefix_len;  // per (i,j): |S_ij| boundary in order
};

void tacl_forward(const Tensor& z, const std::vector<double>& ld,
                  const std::vector<double>& mask, double kappa1, TaclWork& w,
                  double& loss_out) {
  const std::int64_t m = z.dim(0);
  const std::int64_t dz = z.dim(1);
  const double* pz = z.data().data();
  w.m = m;
  w.dist.assign(static_cast<std::size_t>(m * m), 0.0);
  w.e.assign(static_cast<std::size_t>(m * m), 0.0);
  w.denom.assign(static_cast<std::size_t>(m * m), 0.0);
  w.order.assign(static_cast<std::size_t>(m * (m - 1)), 0);
  w.prefix_len.assign(static_cast<std::size_t>(m * m), 0);

  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = i + 1; j < m; ++j) {
      double s = 0.0;
      const double* zi = pz + i * dz;
      const double* zj = pz + j * dz;
      for (std::int64_t c = 0; c < dz; ++c) {
        const double dlt = zi[c] - zj[c];
        s += dlt * dlt;
      }
      const double d = std::sqrt(s);
      w.dist[i * m + j] = d;
      w.dist[j * m + i] = d;
      const double ev = std::exp(-d / kappa1);
      w.e[i * m + j] = ev;
      w.e[j * m + i] = ev;
    }
    w.e[i * m + i] = 1.0;
  }

  double total = 0.0;
  std::vector<std::int32_t> idx;
  std::vector<double> prefix;
  for (std::int64_t i = 0; i < m; ++i) {
    idx.clear();
    for (std::int64_t k = 0; k < m; ++k) {
      if (k != i) idx.push_back(static_cast<std::int32_t>(k));
    }
    const double* ldrow = ld.data() + i * m;
    std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
      return ldrow[a] > ldrow[b];
    });
    std::copy(idx.begin(), idx.end(), w.order.begin() + i * (m - 1));

    // Exclusive prefix sums of e over the sorted order.
    prefix.assign(idx.size() + 1, 0.0);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      prefix[p + 1] = prefix[p] + w.e[i * m + idx[p]];
    }
    // Tie runs: items with equal label distance share a strict-prefix length.
    std::size_t run_start = 0;
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (p > 0 && ldrow[idx[p]] != ldrow[idx[p - 1]]) run_start = p;
      const std::int64_t j = idx[p];
      const std::int32_t blen = static_cast<std::int32_t>(run_start);
      w.prefix_len[i * m + j] = blen;
      double den = prefix[run_start] + w.e[i * m + j];
      if (den < 1e-300) den = 1e-300;
      w.denom[i * m + j] = den;
      const double phi = mask[i * m + j];
      total += phi * (-w.dist[i * m + j] / kappa1 - std::log(den));
    }
  }
  loss_out = -total / static_cast<double>(m * m);
}

}  // namespace

Tensor tacl_pairwise_loss(const Tensor& z, const std::vector<double>& label_dist,
                          const std::vector<double>& mask, double kappa1) {
  require(z.ndim() == 2, "tacl_pairwise_loss: z must be [m,dz]");
  const std::int64_t m = z.dim(0);
  require(m >= 2, "tacl_pairwise_loss: needs at least two anchors");
  require(static_cast<std::int64_t>(label_dist.size()) == m * m &&
              static_cast<std::int64_t>(mask.size()) == m * m,
          "tacl_pairwise_loss: label_dist/mask must be m*m");
  require(kappa1 > 0.0, "tacl_pairwise_loss: kappa1 must be positive");

  auto work = std::make_shared<TaclWork>();
  double loss_val = 0.0;
  tacl_forward(z, label_dist, mask, kappa1, *work, loss_val);
  check_finite("tacl_pairwise_loss", {loss_val});
  Tensor y = make_tensor({1}, {loss_val}, tracked({&z}));
  if (y.requires_grad()) {
    Tape::active()->record([z, y, work, label_dist, mask, kappa1]() {
      const auto* g = out_grad(y);
      if (!g) return;
      const double gl = (*g)[0];
      const std::int64_t m = work->m;
      const std::int64_t dz = z.dim(1);
      const double inv = 1.0 / (static_cast<double>(m * m) * kappa1);
      const double* pz = z.data().data();
      double* gz = acc_grad(z);
      std::vector<double> gsim(static_cast<std::size_t>(m * m), 0.0);
      std::vector<double> radd;
      for (std::int64_t i = 0; i < m; ++i) {
        const std::int32_t* order = work->order.data() + i * (m - 1);
        radd.assign(static_cast<std::size_t>(m), 0.0);
        for (std::int64_t p = 0; p < m - 1; ++p) {
          const std::int64_t j = order[p];
          const double phi = mask[i * m + j];
          if (phi == 0.0) continue;
          // Direct numerator contribution of term (i,j).
          gsim[i * m + j] -= gl * phi * inv;
          // Denominator contributions: strict prefix plus the self term.
          const double c = gl * phi * inv / work->denom[i * m + j];
          gsim[i * m + j] += c * work->e[i * m + j];
          const std::int32_t blen = work->prefix_len[i * m + j];
          if (blen > 0) radd[blen - 1] += c;  // suffix-style range marker
        }
        // radd[p] marks a coefficient applying to sorted positions 0..p.
        double running = 0.0;
        for (std::int64_t p = m - 2; p >= 0; --p) {
          running += radd[p];
          if (running != 0.0) {
            const std::int64_t k = order[p];
            gsim[i * m + k] += running * work->e[i * m + k];
          }
        }
      }
      // sim_ik = -dist(z_i, z_k): route gradients into the states.
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t k = 0; k < m; ++k) {
          if (k == i) continue;
          const double gs = gsim[i * m + k];
          if (gs == 0.0) continue;
          const double d = work->dist[i * m + k];
          if (d < 1e-12) continue;
          const double f = -gs / d;
          const double* zi = pz + i * dz;
          const double* zk = pz + k * dz;
          double* gi = gz + i * dz;
          double* gk = gz + k * dz;
          for (std::int64_t c = 0; c < dz; ++c) {
            const double u = (zi[c] - zk[c]) * f;
            gi[c] += u;
            gk[c] -= u;
          }
        }
      }
    });
  }
  return y;
}

}  // namespace trajsurv
