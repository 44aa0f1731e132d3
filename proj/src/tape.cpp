#include "spikegrid/tape.hpp"

#include <cmath>
#include <string>

namespace spikegrid {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Linear: return "linear";
    case OpKind::Pool2d: return "pool2d";
    case OpKind::GlobalAvgPool: return "global_avg_pool";
    case OpKind::Reshape: return "reshape";
    case OpKind::Spike: return "spike";
    case OpKind::SoftSpike: return "soft_spike";
    case OpKind::BatchNormTrain: return "batch_norm_train";
    case OpKind::BatchNormEval: return "batch_norm_eval";
    case OpKind::Logistic: return "logistic";
    case OpKind::BoostAvg: return "boost_avg";
    case OpKind::Sum: return "sum";
    case OpKind::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

void GradientStore::add(int param_id, const Tensor& g) {
  auto it = grads_.find(param_id);
  if (it == grads_.end()) {
    grads_.emplace(param_id, g);
    return;
  }
  if (!same_shape(it->second.shape(), g.shape())) {
    throw DimensionError("gradient shape mismatch for parameter " + std::to_string(param_id));
  }
  std::vector<double> out(g.data().begin(), g.data().end());
  auto prev = it->second.data();
  if (g.dtype() == DType::f32) {
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = quantize(static_cast<float>(prev[i]) + static_cast<float>(out[i]), DType::f32);
    }
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] += prev[i];
  }
  it->second = Tensor::from(g.shape(), std::move(out), g.dtype());
}

const Tensor* GradientStore::find(int param_id) const {
  auto it = grads_.find(param_id);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor GradientStore::get(int param_id, const Shape& shape, DType dt) const {
  if (const Tensor* t = find(param_id)) return *t;
  return Tensor::zeros(shape, dt);
}

Var Tape::leaf(const Tensor& value, int param_id) {
  TapeNode n;
  n.kind = OpKind::Leaf;
  n.out_shape = value.shape();
  n.out_dtype = value.dtype();
  n.param_id = param_id;
  NodeId id = record(std::move(n));
  return Var(value, id);
}

NodeId Tape::record(TapeNode&& node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

namespace {

// out += g, reporting whether every accumulated value stays finite.
bool accumulate(Tensor& out, const Tensor& g) {
  bool finite = true;
  if (!out.defined()) {
    out = g;
    for (double v : g.data()) {
      if (!std::isfinite(v)) finite = false;
    }
    return finite;
  }
  std::vector<double> sum(out.data().begin(), out.data().end());
  auto add = g.data();
  if (out.dtype() == DType::f32) {
    for (size_t i = 0; i < sum.size(); ++i) {
      sum[i] = quantize(static_cast<float>(sum[i]) + static_cast<float>(add[i]), DType::f32);
      if (!std::isfinite(sum[i])) finite = false;
    }
  } else {
    for (size_t i = 0; i < sum.size(); ++i) {
      sum[i] += add[i];
      if (!std::isfinite(sum[i])) finite = false;
    }
  }
  out = Tensor::from(out.shape(), std::move(sum), out.dtype());
  return finite;
}

}  // namespace

GradientStore Tape::backward(NodeId loss_node) const {
  if (loss_node < 0 || static_cast<size_t>(loss_node) >= nodes_.size()) {
    throw ContractError("backward: loss node is not on this tape");
  }
  const TapeNode& loss = nodes_[static_cast<size_t>(loss_node)];
  if (shape_numel(loss.out_shape) != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.out_shape));
  }

  std::vector<Tensor> grad(nodes_.size());
  grad[static_cast<size_t>(loss_node)] = Tensor::full(loss.out_shape, 1.0, loss.out_dtype);

  GradientStore store;
  for (NodeId i = loss_node; i >= 0; --i) {
    Tensor& gout = grad[static_cast<size_t>(i)];
    if (!gout.defined()) continue;
    const TapeNode& n = nodes_[static_cast<size_t>(i)];
    if (n.kind == OpKind::Leaf) {
      if (n.param_id >= 0) store.add(n.param_id, gout);
      gout = Tensor();
      continue;
    }
    std::array<Tensor, 3> gin;
    op_backward(n, gout, gin);
    for (int j = 0; j < 3; ++j) {
      NodeId src = n.in[static_cast<size_t>(j)];
      if (src == kNoNode || !gin[static_cast<size_t>(j)].defined()) continue;
      if (!accumulate(grad[static_cast<size_t>(src)], gin[static_cast<size_t>(j)])) {
        throw NumericError("backward: non-finite gradient at node " + std::to_string(i) + " (" +
                           op_name(n.kind) + ")");
      }
    }
    gout = Tensor();  // release as soon as consumed
  }
  return store;
}

GradientStore backward(const Tape& tape, NodeId loss_node) { return tape.backward(loss_node); }

}  // namespace spikegrid
