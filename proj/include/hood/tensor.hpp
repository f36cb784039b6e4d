#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hood/common.hpp"

namespace hood {

using Shape = std::vector<int>;

long shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// Node payload shared between tensor handles and tape closures. Values are
// 32-bit floats in row-major order; reductions accumulate in 64-bit before
// narrowing back.
struct TensorNode {
  Shape shape;
  Eigen::ArrayXf values;
  std::optional<Eigen::ArrayXf> grad;
  bool requires_grad = false;  // leaf parameter
  bool tracked = false;        // produced on (or feeding) the active tape

  bool participates() const { return requires_grad || tracked; }
  void accumulate(const Eigen::ArrayXf& g);
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

// Dense n-dimensional float tensor with optional reverse-mode autodiff
// participation. Handles are cheap shared references to the node payload;
// ops are free functions that return fresh tensors and, when any input
// participates in gradients, record a backward step on the active tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_array(Shape shape, Eigen::ArrayXf values);
  static Tensor from_values(Shape shape, const std::vector<float>& values);
  // Leaf parameter: participates in backward and optimizer steps.
  static Tensor param(Shape shape, Eigen::ArrayXf values);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  long numel() const { return n_ ? n_->values.size() : 0; }

  const Eigen::ArrayXf& values() const { return n_->values; }
  // In-place mutation is reserved for detached tensors and optimizer updates
  // of leaf parameters; mutating an op output invalidates the tape.
  Eigen::ArrayXf& mutable_values() { return n_->values; }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  bool has_grad() const { return n_ && n_->grad.has_value(); }
  const Eigen::ArrayXf& grad() const;
  void zero_grad() { n_->grad.reset(); }

  // Value copy with no tape linkage and no grad.
  Tensor detached() const;

  float scalar() const;

  detail::NodePtr node() const { return n_; }

 private:
  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}
  detail::NodePtr n_;
};

// Ordered record of executed ops for one forward/backward cycle. Single-use:
// backward() consumes it and a second backward without reset() throws.
class Tape {
 public:
  static Tape& active();

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return steps_.size(); }

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  // Drops all recorded steps and their saved values.
  void reset() {
    steps_.clear();
    consumed_ = false;
  }

  friend void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
  bool enabled_ = true;
};

// Suspends tape recording for the enclosing scope (pure inference).
class NoGradScope {
 public:
  NoGradScope() : prev_(Tape::active().enabled()) {
    Tape::active().set_enabled(false);
  }
  ~NoGradScope() { Tape::active().set_enabled(prev_); }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool prev_;
};

enum class Activation { relu, tanh, softmax_lastdim };

// Elementwise and structural ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor activation(const Tensor& a, Activation kind);
inline Tensor relu(const Tensor& a) { return activation(a, Activation::relu); }
inline Tensor tanh(const Tensor& a) { return activation(a, Activation::tanh); }
inline Tensor softmax_lastdim(const Tensor& a) {
  return activation(a, Activation::softmax_lastdim);
}

// input N x D, weights D x M, bias M.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

// input NCHW, bias C: adds bias[c] across each channel plane.
Tensor channel_bias(const Tensor& input, const Tensor& bias);

// input NCHW, kernel OIHW; cross-correlation with symmetric zero padding.
// H' = (H + 2*padding - KH)/stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding);

// input NCHW, kernel IOHW; adjoint of conv2d for identical geometry.
// H' = (H - 1)*stride - 2*padding + KH.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding);

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean over all elements of weight * (pred - target)^2. weight >= 0.
Tensor weighted_mse(const Tensor& pred, const Tensor& target,
                    const Tensor& weight);

// Populates grad on every participating tensor reachable from loss.
void backward(const Tensor& loss);

}  // namespace hood
