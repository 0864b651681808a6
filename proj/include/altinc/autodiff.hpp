#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altinc/tensor.hpp"

namespace altinc::ad {

/// Lower clamp applied inside every log.
inline constexpr double kEpsLog = 1e-12;

using NodeId = std::size_t;
class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool tracked() const;
};

/// Records operations in execution order. Nodes are stored in a deque so that
/// references to recorded values stay valid while the tape grows.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Tensor value);
  /// A leaf whose gradient is accumulated by backward().
  Var variable(Tensor value);

  /// Appends an operation output. `fn` is kept only when some input is tracked.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool tracked(NodeId id) const { return nodes_.at(id).tracked; }
  std::size_t size() const { return nodes_.size(); }

  /// Zero-initialized on first access.
  Tensor& grad_accumulator(NodeId id);
  /// Gradient of a tracked node after backward(); zeros if nothing flowed into it.
  Tensor grad(Var v) const;

  /// Reverse sweep from a scalar loss. Each node's rule runs at most once.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool tracked = false;
    bool has_grad = false;
    Tensor grad;
  };
  std::deque<Node> nodes_;
};

// Elementwise. `b` may match `a` exactly or be a single-element tensor.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
/// log(max(a, kEpsLog)); the clamp has zero gradient below eps.
Var log(Var a);
Var exp(Var a);
Var sigmoid(Var a);
/// log(1 + exp(a)), overflow-safe.
Var softplus(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);

/// Cross-correlation of input [c_in,h,w] with kernel [c_out,c_in,k,k], odd k.
/// Output size is floor((h + 2 pad - k) / stride) + 1.
Var conv2d(Var input, Var kernel, std::optional<Var> bias, std::size_t stride, std::size_t pad);

/// Per-pixel softmax over channels of [c,h,w] logits, max-subtracted.
Var softmax_channels(Var logits);

/// Picks p[label(y,x), y, x] for every non-ignored pixel; result has one entry
/// per such pixel in row-major order.
Var gather_channels(Var probs, const LabelMap& labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// Output spatial size of conv2d; throws on invalid geometry.
std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

struct Parameter {
  std::string name;
  Tensor value;
};
using ParameterList = std::vector<Parameter>;

/// SGD with heavy-ball momentum: v <- m v + g; theta <- theta - lr v.
class Sgd {
 public:
  Sgd(double lr, double momentum);

  void step(ParameterList& params, std::span<const Tensor> grads);
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

}  // namespace altinc::ad
