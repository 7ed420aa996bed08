// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace singlem {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major f64 array taking part in reverse-mode differentiation.
/// Copies share the underlying node; ops never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  /// Extent along `axis`; negative axes count from the back.
  std::size_t size(int axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// In-place access for leaves (parameters, optimiser updates).
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Empty span until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Seeds d(self)/d(self) = 1 for a single-element tensor and propagates.
  void backward() const;

  /// Same values, no graph history.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- elementwise / broadcasting ------------------------------------------
// Broadcasting follows the usual right-aligned rules: (3,1) + (1,4) -> (3,4).

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

// ---- linear algebra / layout ----------------------------------------------

/// a: (..., m, k); b: (k, n) shared across the batch, or (..., k, n) with the
/// same leading dims as a.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x (..., in) * w (in, out) + b (out); `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& dims);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
/// Selects `indices` along `axis` (repeats allowed).
Tensor gather(const Tensor& a, int axis, const std::vector<std::size_t>& indices);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reduces the last axis away.
Tensor sum_last(const Tensor& a);
Tensor mean_last(const Tensor& a);

// ---- network primitives ------------------------------------------------------

/// x: (..., c_in, t), w: (c_out, c_in, k) with k odd, bias: (c_out) or
/// undefined. Zero-padded cross-correlation keeping t. Throws EvenKernel.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Normalises every slice along `axis` to zero mean / unit variance
/// (eps inside the square root), then applies per-position gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis = -1, double eps = 1e-5);

Tensor elu(const Tensor& x, double alpha = 1.0);
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Elementwise Huber penalty, quadratic for |e| <= delta.
Tensor huber_elements(const Tensor& pred, const Tensor& target, double delta);
/// Mean of huber_elements.
Tensor huber(const Tensor& pred, const Tensor& target, double delta);

/// Projection weights of one self-attention block; each w is (d, d), b is (d).
struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Bidirectional scaled dot-product attention over the second-to-last axis of
/// x (..., n, d). Scores are scaled by 1/sqrt(d/heads). Throws HeadDivisibility.
Tensor multi_head_attention(const Tensor& x, std::size_t heads, const AttentionWeights& w);

}  // namespace singlem
