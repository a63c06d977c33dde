#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tegru/rng.hpp"
#include "tegru/scalar.hpp"

namespace tegru {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Shared storage behind a Tensor handle. Values are immutable after
// creation except through mutable_values() (training-step owner only);
// the grad buffer is filled by Tape::backward and stays empty until then.
struct TensorData {
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Scalar(0));
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Scalar fill);
  static Tensor from_values(Shape shape, std::vector<Scalar> values);
  static Tensor uniform(Shape shape, Scalar lo, Scalar hi, Rng& rng);
  static Tensor normal(Shape shape, Scalar mean, Scalar sd, Rng& rng);
  // Keep/drop mask for dropout: 1 with probability 1-drop_p, else 0.
  static Tensor bernoulli_mask(Shape shape, double drop_p, Rng& rng);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int dim(int axis) const;  // negative axis counts from the back
  std::size_t numel() const;

  const std::vector<Scalar>& values() const;
  Scalar scalar() const;  // requires numel() == 1

  // In-place write access for the parameter owner (SGD update). Bypasses
  // the tape entirely; never call on a tensor that is part of a live graph.
  std::vector<Scalar>& mutable_values();

  Tensor& set_requires_grad(bool on);
  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<Scalar>& grad() const;  // throws if backward never reached it
  void zero_grad();

  // Deep copy (fresh storage, grad not copied).
  Tensor clone() const;

  const std::shared_ptr<TensorData>& data() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;

  friend Tensor make_tensor(Shape, std::vector<Scalar>);
};

// Internal factory used by op implementations; skips the finite check.
Tensor make_tensor(Shape shape, std::vector<Scalar> values);

// Reverse-mode tape. Construction makes it the active tape (thread-local,
// nestable); differentiable ops append an undo step when any input has
// requires_grad set. backward() replays the steps in exact reverse
// execution order, accumulating into leaf grads. Single use.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> step);
  std::size_t size() const { return steps_.size(); }

  // loss must be scalar and produced under this tape.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> steps_;
  bool used_ = false;
  Tape* prev_ = nullptr;
};

// ---- differentiable operations -------------------------------------------
//
// All ops validate shapes, verify the result is finite (non-finite values
// are surfaced as errors, never propagated), and record a backward step on
// the active tape when an input participates in the gradient.

// Batched matrix product [.., m, k] x [.., k, n] -> [.., m, n]. Leading
// batch extents must match pairwise or be broadcastable from size 1; a
// missing leading axis counts as size 1.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Scalar s);
// x[.., d] + bias[d], the one sanctioned trailing broadcast.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// Normalizes over the last axis to mean 0 / variance 1 (eps inside the
// sqrt), then applies gain (*) y + bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 Scalar eps);

Tensor concat_last_axis(const std::vector<Tensor>& parts);
Tensor transpose_last_two(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Row t of axis 1: [b, n, ..] -> [b, ..].
Tensor select_axis1(const Tensor& x, int t);
// Inverse of the above: n tensors [b, ..] -> [b, n, ..].
Tensor stack_axis1(const std::vector<Tensor>& steps);

// table[vocab, d] gathered by token index -> [b, n, d]. Index 0 is the PAD
// row: it never receives gradient, keeping the PAD embedding frozen at zero.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices,
                        int batch, int seq_len);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

}  // namespace tegru
