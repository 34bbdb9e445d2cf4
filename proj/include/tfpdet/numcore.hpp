#pragma once

// Dense f64 tensors with tape-free reverse-mode differentiation. Every op
// records its inputs and a backward closure on the result node; backward()
// walks the graph reachable from a scalar loss in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tfpdet/rng.hpp"

namespace tfpdet::numcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(const Node& out, const std::vector<NodePtr>& parents)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value iff requires_grad
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward_fn;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v) { return from({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const;
  double operator[](std::size_t flat) const { return node_->value[flat]; }
  double at(std::size_t i, std::size_t j) const { return node_->value[i * node_->shape[1] + j]; }

  void zero_grad();
  // Same storage, no history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Disables graph construction on this thread while alive. Inference paths
// use it so that concurrent forwards never touch parameter grads.
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

// ---------------------------------------------------------------------------
// Parameters

struct GaussianInit {
  double mean = 0.0;
  double stddev = 0.01;
};
struct ConstantInit {
  double value = 0.0;
};
using InitSpec = std::variant<GaussianInit, ConstantInit>;

struct Parameter {
  std::string name;
  Tensor tensor;
  InitSpec init;
};

/// Ordered, name-unique collection of trainable tensors. Registration order
/// is the initialization order and the checkpoint manifest order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Shape shape, InitSpec init);
  void initialize(Rng& rng);

  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }
  const Parameter& get(const std::string& name) const;
  Parameter& get(const std::string& name);
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// ---------------------------------------------------------------------------
// Differentiable operations

/// y = x·w + b for x[N×Din], w[Din×Dout], b[Dout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Cross-correlation along the last axis. x is [C_in×T] or [B×C_in×T];
/// w is [C_out×C_in×k], b is [C_out].
Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                     std::size_t padding);

/// Windowed max per channel over [C×T]; ties route to the lowest index.
Tensor temporal_maxpool(const Tensor& x, std::size_t k, std::size_t stride);

Tensor relu(const Tensor& x);

/// Stacks along the channel axis: [C1×T]+[C2×T] or [B×C1×T]+[B×C2×T].
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Mean over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean over all elements of the smooth-L1 penalty; target is a constant.
Tensor smooth_l1(const Tensor& pred, const Tensor& target);

/// out.flat[i] = x.flat[indices[i]]; gradients scatter-add back.
Tensor gather(const Tensor& x, std::span<const std::size_t> indices, Shape out_shape);

Tensor reshape(const Tensor& x, Shape shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

void backward(const Tensor& loss);

/// Row-wise softmax of a [N×C] value buffer; no graph.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols);

// ---------------------------------------------------------------------------
// Optimizer

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay_factor = 0.1;
  std::int64_t lr_decay_every = 1000;

  double lr_at(std::int64_t step) const;
  void validate() const;
};

/// Momentum buffers, one per parameter in store order.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// v <- momentum*v + grad + wd*param; param <- param - lr(step)*v; grads zeroed.
void sgd_step(ParameterStore& params, const SgdConfig& cfg, std::int64_t step, SgdState& state);

}  // namespace tfpdet::numcore
