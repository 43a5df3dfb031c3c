#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace oscbp::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float64 array. Scalars have shape {1}.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until backward reaches the node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;
};

/// Handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> data() const { return node_->value.values; }
  /// Zeros when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::vector<double>& mutable_grad();
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;
  void zero_grad() { node_->grad.clear(); }

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Leaf that receives gradients.
Var parameter(Tensor t);
/// Leaf without gradient.
Var constant(Tensor t);
/// Fresh leaf with the same value and requires_grad flag; never aliases.
Var deep_copy(const Var& v);

// Elementwise and reshaping ops.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sum(const Var& a);
Var relu(const Var& a);
Var reshape(const Var& a, Shape shape);
Var flatten(const Var& a);
Var transpose(const Var& a);  // 2-D only
Var reverse_rows(const Var& a);  // 2-D only, flips the leading axis
/// Concatenates 1-D (or scalar) inputs into one vector.
Var concat(std::span<const Var> parts);

/// x: C_in x L, kernels: C_out x C_in x W, bias: C_out. Stride 1, zero padding,
/// pad_left + pad_right must equal W - 1 so the output is C_out x L.
Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t pad_left,
           std::size_t pad_right);

/// Gate blocks stacked in the order input, forget, cell, output.
/// input_weights: 4H x D, recurrent_weights: 4H x H, bias: 4H.
struct LstmParams {
  Var input_weights;
  Var recurrent_weights;
  Var bias;

  std::size_t hidden() const;
  std::size_t input_dim() const;
};

/// seq: T x D with zero initial hidden and cell state. Returns the T x H hidden sequence.
Var lstm_layer(const Var& seq, const LstmParams& params);

enum class Activation { Linear, Relu };

/// x: D_in vector, W: D_out x D_in, b: D_out.
Var dense(const Var& x, const Var& weights, const Var& bias, Activation act);

/// Mean squared error. Throws EmptyBatch when N == 0.
Var mse(const Var& pred, const Var& target);
/// Sum of absolute values over the given tensors; subgradient 0 at 0.
Var l1_penalty(std::span<const Var> weights);

/// Reverse sweep from a scalar. Parameter gradients accumulate across calls.
void backward(const Var& loss);

// ---------------------------------------------------------------------------
// Checkpoint container

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "OSCBPTNS" magic, u32 version, u32 count, then per tensor: u32 name length,
/// name bytes, u32 rank, u64 extents, float64 values. Little-endian.
void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

}  // namespace oscbp::ad
