#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <variant>
#include <vector>

#include "spikegrid/tensor.hpp"

namespace spikegrid {

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

// A tensor value together with its position on a tape. node == kNoNode means
// the value is a constant and no gradient flows into it.
struct Var {
  Tensor value;
  NodeId node = kNoNode;

  Var() = default;
  Var(Tensor v) : value(std::move(v)) {}  // NOLINT: implicit constant lift
  Var(Tensor v, NodeId n) : value(std::move(v)), node(n) {}
  bool tracked() const { return node != kNoNode; }
};

enum class OpKind : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  Conv2d,
  Linear,
  Pool2d,
  GlobalAvgPool,
  Reshape,
  Spike,
  SoftSpike,
  BatchNormTrain,
  BatchNormEval,
  Logistic,
  BoostAvg,
  Sum,
  CrossEntropy,
};

const char* op_name(OpKind k);

enum class PoolKind : uint8_t { avg, max };

struct ConvAttrs {
  int stride = 1;
  int padding = 0;
};
struct PoolAttrs {
  PoolKind kind = PoolKind::avg;
  int k = 1;
  int stride = 1;
};
struct SpikeAttrs {
  double u_th = 1.0;
  double alpha = 0.3;
  bool center_at_threshold = true;  // false: triangle centered at zero
};
struct BnAttrs {
  double eps = 1e-5;
  int64_t m = 0;  // reduction size per channel (N * spatial)
};
struct ScaleAttrs {
  double c = 1.0;
};
struct ReshapeAttrs {
  Shape in_shape;
};
struct CeAttrs {
  std::vector<int> labels;
};
struct BoostAttrs {
  int group = 10;
};

using OpAttrs = std::variant<std::monostate, ConvAttrs, PoolAttrs, SpikeAttrs, BnAttrs,
                             ScaleAttrs, ReshapeAttrs, CeAttrs, BoostAttrs>;

// One recorded operation: kind, producer ids of its inputs, and whatever
// forward values its backward rule needs.
struct TapeNode {
  OpKind kind = OpKind::Leaf;
  std::array<NodeId, 3> in{kNoNode, kNoNode, kNoNode};
  std::vector<Tensor> saved;
  OpAttrs attrs;
  Shape out_shape;
  DType out_dtype = DType::f64;
  int param_id = -1;  // leaves only
};

// Gradients keyed by parameter id. A missing entry is a zero gradient.
class GradientStore {
 public:
  void add(int param_id, const Tensor& g);
  const Tensor* find(int param_id) const;
  // Returns the gradient or a zero tensor of the given shape.
  Tensor get(int param_id, const Shape& shape, DType dt) const;
  size_t size() const { return grads_.size(); }
  const std::unordered_map<int, Tensor>& all() const { return grads_; }

 private:
  std::unordered_map<int, Tensor> grads_;
};

class Tape {
 public:
  // Registers a differentiable leaf. param_id keys the GradientStore entry;
  // ids must be unique within one tape.
  Var leaf(const Tensor& value, int param_id);

  NodeId record(TapeNode&& node);
  const TapeNode& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss node. Fan-out contributions sum; a
  // non-finite gradient raises NumericError naming the node.
  GradientStore backward(NodeId loss_node) const;

 private:
  std::vector<TapeNode> nodes_;
};

GradientStore backward(const Tape& tape, NodeId loss_node);

// Implemented in ops.cpp: per-op reverse rules. gin entries are written only
// for inputs that exist; missing inputs stay undefined.
void op_backward(const TapeNode& node, const Tensor& gout, std::array<Tensor, 3>& gin);

}  // namespace spikegrid
