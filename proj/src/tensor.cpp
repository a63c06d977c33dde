#include "tegru/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tegru {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                  " has a non-positive extent");
    }
  }
}

void check_finite(const std::vector<Scalar>& v, const char* where) {
  for (Scalar x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw std::runtime_error(std::string(where) +
                               ": non-finite value produced");
    }
  }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor make_tensor(Shape shape, std::vector<Scalar> values) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  Tensor t;
  t.d_ = std::move(d);
  return t;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Scalar(0)); }

Tensor Tensor::full(Shape shape, Scalar fill) {
  validate_shape(shape);
  std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<Scalar>(n, fill));
}

Tensor Tensor::from_values(Shape shape, std::vector<Scalar> values) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument(
        "from_values: shape " + shape_str(shape) + " expects " +
        std::to_string(shape_numel(shape)) + " elements, got " +
        std::to_string(values.size()));
  }
  check_finite(values, "from_values");
  return make_tensor(std::move(shape), std::move(values));
}

Tensor Tensor::uniform(Shape shape, Scalar lo, Scalar hi, Rng& rng) {
  validate_shape(shape);
  std::vector<Scalar> v(shape_numel(shape));
  for (auto& x : v) {
    x = static_cast<Scalar>(
        rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }
  return make_tensor(std::move(shape), std::move(v));
}

Tensor Tensor::normal(Shape shape, Scalar mean, Scalar sd, Rng& rng) {
  validate_shape(shape);
  std::vector<Scalar> v(shape_numel(shape));
  for (auto& x : v) {
    x = static_cast<Scalar>(static_cast<double>(mean) +
                            static_cast<double>(sd) * rng.normal());
  }
  return make_tensor(std::move(shape), std::move(v));
}

Tensor Tensor::bernoulli_mask(Shape shape, double drop_p, Rng& rng) {
  if (drop_p < 0.0 || drop_p > 1.0) {
    throw std::invalid_argument("bernoulli_mask: drop probability " +
                                std::to_string(drop_p) + " outside [0, 1]");
  }
  validate_shape(shape);
  std::vector<Scalar> v(shape_numel(shape));
  // uniform() < 1 always holds, so drop_p == 1 drops every element and
  // drop_p == 0 keeps every element.
  for (auto& x : v) x = rng.uniform() < drop_p ? Scalar(0) : Scalar(1);
  return make_tensor(std::move(shape), std::move(v));
}

const Shape& Tensor::shape() const {
  if (!d_) throw std::runtime_error("use of an undefined tensor");
  return d_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::numel() const { return d_ ? d_->value.size() : 0; }

const std::vector<Scalar>& Tensor::values() const {
  if (!d_) throw std::runtime_error("use of an undefined tensor");
  return d_->value;
}

Scalar Tensor::scalar() const {
  if (numel() != 1) {
    throw std::invalid_argument("scalar() on tensor of shape " +
                                shape_str(shape()));
  }
  return d_->value[0];
}

std::vector<Scalar>& Tensor::mutable_values() {
  if (!d_) throw std::runtime_error("use of an undefined tensor");
  return d_->value;
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!d_) throw std::runtime_error("use of an undefined tensor");
  d_->requires_grad = on;
  return *this;
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

bool Tensor::has_grad() const { return d_ && !d_->grad.empty(); }

const std::vector<Scalar>& Tensor::grad() const {
  if (!has_grad()) {
    throw std::runtime_error(
        "grad requested but backward never reached this tensor");
  }
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_) d_->grad.clear();
}

Tensor Tensor::clone() const {
  if (!d_) return Tensor();
  Tensor t = make_tensor(d_->shape, d_->value);
  t.d_->requires_grad = d_->requires_grad;
  return t;
}

// ---- Tape -----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> step) {
  steps_.push_back(std::move(step));
}

void Tape::backward(const Tensor& loss) {
  if (used_) {
    throw std::runtime_error("backward called twice on the same tape");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw std::runtime_error(
        "backward on a detached loss: no gradient-enabled input reaches it");
  }
  used_ = true;
  auto d = loss.data();
  d->ensure_grad();
  d->grad[0] = Scalar(1);
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

// ---- op plumbing ------------------------------------------------------------

namespace {

using DataPtr = std::shared_ptr<TensorData>;

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Build the result, surface non-finite values, and (when the graph is being
// traced) mark it and record the backward step produced by make_step(out).
template <class MakeStep>
Tensor finish(const char* op, Shape shape, std::vector<Scalar> out,
              std::initializer_list<const Tensor*> inputs,
              MakeStep&& make_step) {
  check_finite(out, op);
  Tensor t = make_tensor(std::move(shape), std::move(out));
  if (tracing(inputs)) {
    t.set_requires_grad(true);
    Tape::active()->record(make_step(t.data()));
  }
  return t;
}

const std::vector<Scalar>* out_grad(const DataPtr& out) {
  return out->grad.empty() ? nullptr : &out->grad;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor input");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

int normalize_axis(const Tensor& t, int axis, const char* op) {
  int r = t.rank();
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw std::invalid_argument(std::string(op) + ": axis " +
                                std::to_string(axis) +
                                " out of range for shape " +
                                shape_str(t.shape()));
  }
  return a;
}

// Batch-cell offsets for batched matmul with broadcast-from-1 on leading
// axes. One entry per output batch cell.
struct BatchPlan {
  Shape out_batch;
  std::vector<std::size_t> a_off, b_off;
};

BatchPlan plan_batches(const Shape& a, const Shape& b) {
  int ra = static_cast<int>(a.size()) - 2;
  int rb = static_cast<int>(b.size()) - 2;
  int r = std::max(ra, rb);
  std::size_t ur = static_cast<std::size_t>(r);
  Shape ea(ur, 1), eb(ur, 1), out(ur, 1);
  for (int i = 0; i < ra; ++i)
    ea[static_cast<std::size_t>(r - ra + i)] = a[static_cast<std::size_t>(i)];
  for (int i = 0; i < rb; ++i)
    eb[static_cast<std::size_t>(r - rb + i)] = b[static_cast<std::size_t>(i)];
  for (std::size_t i = 0; i < ur; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) {
      throw std::invalid_argument("matmul: incompatible batch extents " +
                                  shape_str(a) + " vs " + shape_str(b));
    }
    out[i] = std::max(ea[i], eb[i]);
  }

  BatchPlan plan;
  plan.out_batch = out;
  std::size_t cells = shape_numel(out);
  plan.a_off.resize(cells);
  plan.b_off.resize(cells);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::size_t rem = cell, ao = 0, bo = 0;
    std::size_t a_stride = 1, b_stride = 1;
    for (int i = r - 1; i >= 0; --i) {
      std::size_t ui = static_cast<std::size_t>(i);
      std::size_t idx = rem % static_cast<std::size_t>(out[ui]);
      rem /= static_cast<std::size_t>(out[ui]);
      ao += (ea[ui] == 1 ? 0 : idx) * a_stride;
      bo += (eb[ui] == 1 ? 0 : idx) * b_stride;
      a_stride *= static_cast<std::size_t>(ea[ui]);
      b_stride *= static_cast<std::size_t>(eb[ui]);
    }
    plan.a_off[cell] = ao;
    plan.b_off[cell] = bo;
  }
  return plan;
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const Scalar* a, const Scalar* b, Scalar* c, int m, int k,
             int n) {
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      Scalar av = a[i * k + p];
      const Scalar* brow = b + p * n;
      Scalar* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B[k,n]^T
void gemm_nt(const Scalar* dc, const Scalar* b, Scalar* da, int m, int k,
             int n) {
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      Scalar acc = 0;
      const Scalar* dcrow = dc + i * n;
      const Scalar* brow = b + p * n;
      for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
void gemm_tn(const Scalar* a, const Scalar* dc, Scalar* db, int m, int k,
             int n) {
  for (int i = 0; i < m; ++i) {
    const Scalar* dcrow = dc + i * n;
    for (int p = 0; p < k; ++p) {
      Scalar av = a[i * k + p];
      Scalar* dbrow = db + p * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

}  // namespace

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() < 2 || b.rank() < 2) {
    throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  int m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner extents differ, " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  BatchPlan plan = plan_batches(a.shape(), b.shape());
  Shape out_shape = plan.out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::size_t mk = static_cast<std::size_t>(m) * static_cast<std::size_t>(k);
  std::size_t kn = static_cast<std::size_t>(k) * static_cast<std::size_t>(n);
  std::size_t mn = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);

  std::vector<Scalar> out(shape_numel(out_shape), Scalar(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t cell = 0; cell < plan.a_off.size(); ++cell) {
    gemm_nn(av.data() + plan.a_off[cell] * mk,
            bv.data() + plan.b_off[cell] * kn, out.data() + cell * mn, m, k,
            n);
  }

  DataPtr ad = a.data(), bd = b.data();
  return finish(
      "matmul", std::move(out_shape), std::move(out), {&a, &b},
      [ad, bd, plan, m, k, n, mk, kn, mn](DataPtr od) {
        return [ad, bd, od, plan, m, k, n, mk, kn, mn]() {
          const std::vector<Scalar>* g = out_grad(od);
          if (!g) return;
          if (ad->requires_grad) {
            ad->ensure_grad();
            for (std::size_t cell = 0; cell < plan.a_off.size(); ++cell) {
              gemm_nt(g->data() + cell * mn,
                      bd->value.data() + plan.b_off[cell] * kn,
                      ad->grad.data() + plan.a_off[cell] * mk, m, k, n);
            }
          }
          if (bd->requires_grad) {
            bd->ensure_grad();
            for (std::size_t cell = 0; cell < plan.b_off.size(); ++cell) {
              gemm_tn(ad->value.data() + plan.a_off[cell] * mk,
                      g->data() + cell * mn,
                      bd->grad.data() + plan.b_off[cell] * kn, m, k, n);
            }
          }
        };
      });
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<Scalar> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  DataPtr ad = a.data(), bd = b.data();
  return finish("add", a.shape(), std::move(out), {&a, &b}, [ad, bd](DataPtr od) {
    return [ad, bd, od]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < g->size(); ++i) ad->grad[i] += (*g)[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < g->size(); ++i) bd->grad[i] += (*g)[i];
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<Scalar> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  DataPtr ad = a.data(), bd = b.data();
  return finish("sub", a.shape(), std::move(out), {&a, &b}, [ad, bd](DataPtr od) {
    return [ad, bd, od]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < g->size(); ++i) ad->grad[i] += (*g)[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < g->size(); ++i) bd->grad[i] -= (*g)[i];
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<Scalar> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  DataPtr ad = a.data(), bd = b.data();
  return finish("mul", a.shape(), std::move(out), {&a, &b}, [ad, bd](DataPtr od) {
    return [ad, bd, od]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < g->size(); ++i)
          ad->grad[i] += (*g)[i] * bd->value[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < g->size(); ++i)
          bd->grad[i] += (*g)[i] * ad->value[i];
      }
    };
  });
}

Tensor scale(const Tensor& x, Scalar s) {
  require_defined(x, "scale");
  if (!std::isfinite(static_cast<double>(s))) {
    throw std::invalid_argument("scale: non-finite factor");
  }
  const auto& xv = x.values();
  std::vector<Scalar> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * s;
  DataPtr xd = x.data();
  return finish("scale", x.shape(), std::move(out), {&x}, [xd, s](DataPtr od) {
    return [xd, od, s]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g || !xd->requires_grad) return;
      xd->ensure_grad();
      for (std::size_t i = 0; i < g->size(); ++i) xd->grad[i] += (*g)[i] * s;
    };
  });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_defined(x, "add_rowwise");
  require_defined(bias, "add_rowwise");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(-1)) {
    throw std::invalid_argument("add_rowwise: bias " + shape_str(bias.shape()) +
                                " does not match last axis of " +
                                shape_str(x.shape()));
  }
  std::size_t d = static_cast<std::size_t>(x.dim(-1));
  const auto& xv = x.values();
  const auto& bv = bias.values();
  std::vector<Scalar> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % d];
  DataPtr xd = x.data(), bd = bias.data();
  return finish("add_rowwise", x.shape(), std::move(out), {&x, &bias},
                [xd, bd, d](DataPtr od) {
                  return [xd, bd, od, d]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g) return;
                    if (xd->requires_grad) {
                      xd->ensure_grad();
                      for (std::size_t i = 0; i < g->size(); ++i)
                        xd->grad[i] += (*g)[i];
                    }
                    if (bd->requires_grad) {
                      bd->ensure_grad();
                      for (std::size_t i = 0; i < g->size(); ++i)
                        bd->grad[i % d] += (*g)[i];
                    }
                  };
                });
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd dydx_from) {
  require_defined(x, name);
  const auto& xv = x.values();
  std::vector<Scalar> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  DataPtr xd = x.data();
  return finish(name, x.shape(), std::move(out), {&x},
                [xd, dydx_from](DataPtr od) {
                  return [xd, od, dydx_from]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (std::size_t i = 0; i < g->size(); ++i) {
                      xd->grad[i] +=
                          (*g)[i] * dydx_from(xd->value[i], od->value[i]);
                    }
                  };
                });
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](Scalar in, Scalar) { return in > Scalar(0) ? Scalar(1) : Scalar(0); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](Scalar v) {
        // Branch keeps exp() argument non-positive for stability.
        if (v >= Scalar(0)) {
          Scalar e = std::exp(-v);
          return Scalar(1) / (Scalar(1) + e);
        }
        Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](Scalar v) { return std::tanh(v); },
      [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

// ---- softmax family ----------------------------------------------------------

namespace {

// Iteration geometry for a reduction along `axis`.
struct AxisView {
  std::size_t outer, len, inner;
};

AxisView axis_view(const Tensor& t, int axis) {
  const Shape& s = t.shape();
  AxisView v{1, static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]), 1};
  for (int i = 0; i < axis; ++i) v.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    v.inner *= static_cast<std::size_t>(s[i]);
  return v;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  int ax = normalize_axis(x, axis, "softmax");
  AxisView v = axis_view(x, ax);
  const auto& xv = x.values();
  std::vector<Scalar> out(xv.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      std::size_t base = o * v.len * v.inner + in;
      Scalar m = xv[base];
      for (std::size_t t = 1; t < v.len; ++t)
        m = std::max(m, xv[base + t * v.inner]);
      Scalar sum = 0;
      for (std::size_t t = 0; t < v.len; ++t) {
        Scalar e = std::exp(xv[base + t * v.inner] - m);
        out[base + t * v.inner] = e;
        sum += e;
      }
      Scalar inv = Scalar(1) / sum;
      for (std::size_t t = 0; t < v.len; ++t) out[base + t * v.inner] *= inv;
    }
  }
  DataPtr xd = x.data();
  return finish("softmax", x.shape(), std::move(out), {&x}, [xd, v](DataPtr od) {
    return [xd, od, v]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g || !xd->requires_grad) return;
      xd->ensure_grad();
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
          std::size_t base = o * v.len * v.inner + in;
          Scalar dot = 0;
          for (std::size_t t = 0; t < v.len; ++t) {
            std::size_t i = base + t * v.inner;
            dot += (*g)[i] * od->value[i];
          }
          for (std::size_t t = 0; t < v.len; ++t) {
            std::size_t i = base + t * v.inner;
            xd->grad[i] += od->value[i] * ((*g)[i] - dot);
          }
        }
      }
    };
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  require_defined(x, "log_softmax");
  int ax = normalize_axis(x, axis, "log_softmax");
  AxisView v = axis_view(x, ax);
  const auto& xv = x.values();
  std::vector<Scalar> out(xv.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      std::size_t base = o * v.len * v.inner + in;
      Scalar m = xv[base];
      for (std::size_t t = 1; t < v.len; ++t)
        m = std::max(m, xv[base + t * v.inner]);
      Scalar sum = 0;
      for (std::size_t t = 0; t < v.len; ++t)
        sum += std::exp(xv[base + t * v.inner] - m);
      Scalar lse = m + std::log(sum);
      for (std::size_t t = 0; t < v.len; ++t) {
        std::size_t i = base + t * v.inner;
        out[i] = xv[i] - lse;
      }
    }
  }
  DataPtr xd = x.data();
  return finish("log_softmax", x.shape(), std::move(out), {&x},
                [xd, v](DataPtr od) {
                  return [xd, od, v]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (std::size_t o = 0; o < v.outer; ++o) {
                      for (std::size_t in = 0; in < v.inner; ++in) {
                        std::size_t base = o * v.len * v.inner + in;
                        Scalar gsum = 0;
                        for (std::size_t t = 0; t < v.len; ++t)
                          gsum += (*g)[base + t * v.inner];
                        for (std::size_t t = 0; t < v.len; ++t) {
                          std::size_t i = base + t * v.inner;
                          xd->grad[i] +=
                              (*g)[i] - std::exp(od->value[i]) * gsum;
                        }
                      }
                    }
                  };
                });
}

// ---- layernorm ---------------------------------------------------------------

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 Scalar eps) {
  require_defined(x, "layernorm");
  require_defined(gain, "layernorm");
  require_defined(bias, "layernorm");
  int d = x.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 ||
      bias.dim(0) != d) {
    throw std::invalid_argument(
        "layernorm: gain " + shape_str(gain.shape()) + " / bias " +
        shape_str(bias.shape()) + " do not match feature axis of " +
        shape_str(x.shape()));
  }
  std::size_t ud = static_cast<std::size_t>(d);
  std::size_t rows = x.numel() / ud;
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<Scalar> out(xv.size());
  // Normalized values and inverse stddev are kept for the backward pass.
  auto norm = std::make_shared<std::vector<Scalar>>(xv.size());
  auto inv_sd = std::make_shared<std::vector<Scalar>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* row = xv.data() + r * ud;
    Scalar mean = 0;
    for (std::size_t j = 0; j < ud; ++j) mean += row[j];
    mean /= static_cast<Scalar>(d);
    Scalar var = 0;
    for (std::size_t j = 0; j < ud; ++j) {
      Scalar c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<Scalar>(d);
    Scalar inv = Scalar(1) / std::sqrt(var + eps);
    (*inv_sd)[r] = inv;
    for (std::size_t j = 0; j < ud; ++j) {
      Scalar y = (row[j] - mean) * inv;
      (*norm)[r * ud + j] = y;
      out[r * ud + j] = gv[j] * y + bv[j];
    }
  }
  DataPtr xd = x.data(), gd = gain.data(), bd = bias.data();
  return finish(
      "layernorm", x.shape(), std::move(out), {&x, &gain, &bias},
      [xd, gd, bd, norm, inv_sd, rows, ud](DataPtr od) {
        return [xd, gd, bd, od, norm, inv_sd, rows, ud]() {
          const std::vector<Scalar>* g = out_grad(od);
          if (!g) return;
          if (gd->requires_grad) {
            gd->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < ud; ++j)
                gd->grad[j] += (*g)[r * ud + j] * (*norm)[r * ud + j];
          }
          if (bd->requires_grad) {
            bd->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < ud; ++j)
                bd->grad[j] += (*g)[r * ud + j];
          }
          if (xd->requires_grad) {
            xd->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
              Scalar mean_dy = 0, mean_dyy = 0;
              for (std::size_t j = 0; j < ud; ++j) {
                Scalar dy = (*g)[r * ud + j] * gd->value[j];
                mean_dy += dy;
                mean_dyy += dy * (*norm)[r * ud + j];
              }
              mean_dy /= static_cast<Scalar>(ud);
              mean_dyy /= static_cast<Scalar>(ud);
              for (std::size_t j = 0; j < ud; ++j) {
                Scalar dy = (*g)[r * ud + j] * gd->value[j];
                xd->grad[r * ud + j] +=
                    (*inv_sd)[r] *
                    (dy - mean_dy - (*norm)[r * ud + j] * mean_dyy);
              }
            }
          }
        };
      });
}

// ---- shape ops ---------------------------------------------------------------

Tensor concat_last_axis(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_last_axis: no inputs");
  }
  for (const Tensor& p : parts) require_defined(p, "concat_last_axis");
  const Shape& s0 = parts[0].shape();
  int total_last = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size() ||
        !std::equal(s.begin(), s.end() - 1, s0.begin())) {
      throw std::invalid_argument(
          "concat_last_axis: non-last extents differ, " + shape_str(s0) +
          " vs " + shape_str(s));
    }
    total_last += s.back();
  }
  Shape out_shape = s0;
  out_shape.back() = total_last;
  std::size_t rows = shape_numel(out_shape) / static_cast<std::size_t>(total_last);

  std::vector<Scalar> out(shape_numel(out_shape));
  std::vector<std::size_t> widths, offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    widths.push_back(static_cast<std::size_t>(p.dim(-1)));
    offsets.push_back(off);
    off += widths.back();
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const auto& pv = parts[pi].values();
      std::copy(pv.begin() + static_cast<std::ptrdiff_t>(r * widths[pi]),
                pv.begin() + static_cast<std::ptrdiff_t>((r + 1) * widths[pi]),
                out.begin() + static_cast<std::ptrdiff_t>(
                                  r * static_cast<std::size_t>(total_last) +
                                  offsets[pi]));
    }
  }

  std::vector<DataPtr> pd;
  for (const Tensor& p : parts) pd.push_back(p.data());
  std::vector<const Tensor*> in_ptrs;
  for (const Tensor& p : parts) in_ptrs.push_back(&p);
  bool trace = false;
  for (const Tensor& p : parts) trace = trace || p.requires_grad();

  check_finite(out, "concat_last_axis");
  Tensor t = make_tensor(out_shape, std::move(out));
  if (Tape::active() && trace) {
    t.set_requires_grad(true);
    DataPtr od = t.data();
    std::size_t tl = static_cast<std::size_t>(total_last);
    Tape::active()->record([pd, od, widths, offsets, rows, tl]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g) return;
      for (std::size_t pi = 0; pi < pd.size(); ++pi) {
        if (!pd[pi]->requires_grad) continue;
        pd[pi]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[pi]; ++j) {
            pd[pi]->grad[r * widths[pi] + j] += (*g)[r * tl + offsets[pi] + j];
          }
        }
      }
    });
  }
  return t;
}

Tensor transpose_last_two(const Tensor& x) {
  require_defined(x, "transpose_last_two");
  if (x.rank() < 2) {
    throw std::invalid_argument("transpose_last_two: rank < 2, shape " +
                                shape_str(x.shape()));
  }
  std::size_t r = static_cast<std::size_t>(x.dim(-2));
  std::size_t c = static_cast<std::size_t>(x.dim(-1));
  std::size_t blocks = x.numel() / (r * c);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  const auto& xv = x.values();
  std::vector<Scalar> out(xv.size());
  for (std::size_t bl = 0; bl < blocks; ++bl) {
    const Scalar* src = xv.data() + bl * r * c;
    Scalar* dst = out.data() + bl * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  DataPtr xd = x.data();
  return finish("transpose_last_two", std::move(out_shape), std::move(out),
                {&x}, [xd, r, c, blocks](DataPtr od) {
                  return [xd, od, r, c, blocks]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (std::size_t bl = 0; bl < blocks; ++bl) {
                      const Scalar* gs = g->data() + bl * r * c;
                      Scalar* dx = xd->grad.data() + bl * r * c;
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                          dx[i * c + j] += gs[j * r + i];
                    }
                  };
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  validate_shape(shape);
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) +
                                " cannot become " + shape_str(shape));
  }
  DataPtr xd = x.data();
  return finish("reshape", std::move(shape), x.values(), {&x},
                [xd](DataPtr od) {
                  return [xd, od]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (std::size_t i = 0; i < g->size(); ++i)
                      xd->grad[i] += (*g)[i];
                  };
                });
}

Tensor select_axis1(const Tensor& x, int t) {
  require_defined(x, "select_axis1");
  if (x.rank() < 2) {
    throw std::invalid_argument("select_axis1: rank < 2, shape " +
                                shape_str(x.shape()));
  }
  int b = x.dim(0), n = x.dim(1);
  if (t < 0 || t >= n) {
    throw std::invalid_argument("select_axis1: index " + std::to_string(t) +
                                " out of range for shape " +
                                shape_str(x.shape()));
  }
  Shape out_shape{b};
  for (std::size_t i = 2; i < x.shape().size(); ++i)
    out_shape.push_back(x.shape()[i]);
  std::size_t block = x.numel() / (static_cast<std::size_t>(b) *
                                   static_cast<std::size_t>(n));
  const auto& xv = x.values();
  std::vector<Scalar> out(static_cast<std::size_t>(b) * block);
  for (int bi = 0; bi < b; ++bi) {
    std::size_t src = (static_cast<std::size_t>(bi) * static_cast<std::size_t>(n) +
                       static_cast<std::size_t>(t)) *
                      block;
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(src),
              xv.begin() + static_cast<std::ptrdiff_t>(src + block),
              out.begin() + static_cast<std::ptrdiff_t>(
                                static_cast<std::size_t>(bi) * block));
  }
  DataPtr xd = x.data();
  std::size_t un = static_cast<std::size_t>(n), ut = static_cast<std::size_t>(t);
  std::size_t ub = static_cast<std::size_t>(b);
  return finish("select_axis1", std::move(out_shape), std::move(out), {&x},
                [xd, ub, un, ut, block](DataPtr od) {
                  return [xd, od, ub, un, ut, block]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (std::size_t bi = 0; bi < ub; ++bi) {
                      std::size_t dst = (bi * un + ut) * block;
                      for (std::size_t j = 0; j < block; ++j)
                        xd->grad[dst + j] += (*g)[bi * block + j];
                    }
                  };
                });
}

Tensor stack_axis1(const std::vector<Tensor>& steps) {
  if (steps.empty()) {
    throw std::invalid_argument("stack_axis1: no inputs");
  }
  const Shape& s0 = steps[0].shape();
  for (const Tensor& s : steps) {
    require_defined(s, "stack_axis1");
    if (s.shape() != s0) {
      throw std::invalid_argument("stack_axis1: shape mismatch " +
                                  shape_str(s0) + " vs " +
                                  shape_str(s.shape()));
    }
  }
  if (s0.empty()) {
    throw std::invalid_argument("stack_axis1: inputs must have rank >= 1");
  }
  std::size_t b = static_cast<std::size_t>(s0[0]);
  std::size_t block = steps[0].numel() / b;
  std::size_t n = steps.size();
  Shape out_shape{s0[0], static_cast<int>(n)};
  for (std::size_t i = 1; i < s0.size(); ++i) out_shape.push_back(s0[i]);

  std::vector<Scalar> out(b * n * block);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& sv = steps[t].values();
    for (std::size_t bi = 0; bi < b; ++bi) {
      std::copy(sv.begin() + static_cast<std::ptrdiff_t>(bi * block),
                sv.begin() + static_cast<std::ptrdiff_t>((bi + 1) * block),
                out.begin() +
                    static_cast<std::ptrdiff_t>((bi * n + t) * block));
    }
  }

  std::vector<DataPtr> sd;
  bool trace = false;
  for (const Tensor& s : steps) {
    sd.push_back(s.data());
    trace = trace || s.requires_grad();
  }
  check_finite(out, "stack_axis1");
  Tensor t = make_tensor(std::move(out_shape), std::move(out));
  if (Tape::active() && trace) {
    t.set_requires_grad(true);
    DataPtr od = t.data();
    Tape::active()->record([sd, od, b, n, block]() {
      const std::vector<Scalar>* g = out_grad(od);
      if (!g) return;
      for (std::size_t ti = 0; ti < n; ++ti) {
        if (!sd[ti]->requires_grad) continue;
        sd[ti]->ensure_grad();
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t j = 0; j < block; ++j) {
            sd[ti]->grad[bi * block + j] += (*g)[(bi * n + ti) * block + j];
          }
        }
      }
    });
  }
  return t;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices,
                        int batch, int seq_len) {
  require_defined(table, "embedding_lookup");
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " +
                                shape_str(table.shape()));
  }
  if (indices.size() !=
      static_cast<std::size_t>(batch) * static_cast<std::size_t>(seq_len)) {
    throw std::invalid_argument("embedding_lookup: index count " +
                                std::to_string(indices.size()) +
                                " does not match batch " +
                                std::to_string(batch) + " x len " +
                                std::to_string(seq_len));
  }
  int vocab = table.dim(0), d = table.dim(1);
  std::size_t ud = static_cast<std::size_t>(d);
  for (int idx : indices) {
    if (idx < 0 || idx >= vocab) {
      throw std::invalid_argument("embedding_lookup: token index " +
                                  std::to_string(idx) +
                                  " outside vocabulary of size " +
                                  std::to_string(vocab));
    }
  }
  const auto& tv = table.values();
  std::vector<Scalar> out(indices.size() * ud);
  for (std::size_t p = 0; p < indices.size(); ++p) {
    std::size_t row = static_cast<std::size_t>(indices[p]) * ud;
    std::copy(tv.begin() + static_cast<std::ptrdiff_t>(row),
              tv.begin() + static_cast<std::ptrdiff_t>(row + ud),
              out.begin() + static_cast<std::ptrdiff_t>(p * ud));
  }
  DataPtr td = table.data();
  auto idx = std::make_shared<std::vector<int>>(indices);
  return finish("embedding_lookup", Shape{batch, seq_len, d}, std::move(out),
                {&table}, [td, idx, ud](DataPtr od) {
                  return [td, od, idx, ud]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !td->requires_grad) return;
                    td->ensure_grad();
                    for (std::size_t p = 0; p < idx->size(); ++p) {
                      int row = (*idx)[p];
                      if (row == 0) continue;  // PAD row stays frozen
                      for (std::size_t j = 0; j < ud; ++j) {
                        td->grad[static_cast<std::size_t>(row) * ud + j] +=
                            (*g)[p * ud + j];
                      }
                    }
                  };
                });
}

Tensor sum_all(const Tensor& x) {
  require_defined(x, "sum_all");
  Scalar s = 0;
  for (Scalar v : x.values()) s += v;
  DataPtr xd = x.data();
  return finish("sum_all", Shape{1}, std::vector<Scalar>{s}, {&x},
                [xd](DataPtr od) {
                  return [xd, od]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (auto& gv : xd->grad) gv += (*g)[0];
                  };
                });
}

Tensor mean_all(const Tensor& x) {
  require_defined(x, "mean_all");
  Scalar s = 0;
  for (Scalar v : x.values()) s += v;
  Scalar inv = Scalar(1) / static_cast<Scalar>(x.numel());
  DataPtr xd = x.data();
  return finish("mean_all", Shape{1}, std::vector<Scalar>{s * inv}, {&x},
                [xd, inv](DataPtr od) {
                  return [xd, od, inv]() {
                    const std::vector<Scalar>* g = out_grad(od);
                    if (!g || !xd->requires_grad) return;
                    xd->ensure_grad();
                    for (auto& gv : xd->grad) gv += (*g)[0] * inv;
                  };
                });
}

}  // namespace tegru
