#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "spikegrid/tape.hpp"

namespace spikegrid::ops {

// Elementwise; shapes must match exactly except that either side may be a
// one-element tensor (scalar-tensor broadcast, the only implicit broadcast).
Var add(Tape* tape, const Var& a, const Var& b);
Var sub(Tape* tape, const Var& a, const Var& b);
Var mul(Tape* tape, const Var& a, const Var& b);
// Multiply by a compile-time constant scalar (not differentiated w.r.t. c).
Var scale(Tape* tape, const Var& a, double c);

// Cross-correlation over [N,C,H,W] with weight [F,C,KH,KW]; zero padding.
// H' = floor((H + 2*padding - KH)/stride) + 1, likewise W'.
Var conv2d(Tape* tape, const Var& x, const Var& w, int stride, int padding);

// x [N,D], w [K,D], optional bias [K] -> [N,K].
Var linear(Tape* tape, const Var& x, const Var& w, const Var* bias);

// Square window k, stride; no padding. When the input has W == 1 the window
// degrades to k x 1 (1-D pooling along H). avg divides by the window size;
// max routes gradient to the first maximum in row-major order.
Var pool2d(Tape* tape, const Var& x, PoolKind kind, int k, int stride);

// [N,C,H,W] -> [N,C].
Var global_avg_pool(Tape* tape, const Var& x);

Var reshape(Tape* tape, const Var& x, Shape shape);

// Hard threshold forward (1 where u >= u_th), triangular surrogate backward.
Var spike(Tape* tape, const Var& u, double u_th, double alpha, bool center_at_threshold);
// Smooth monotone ramp whose exact derivative is the same surrogate; used for
// finite-difference validation of the backward pass.
Var soft_spike(Tape* tape, const Var& u, double u_th, double alpha, bool center_at_threshold);

// Normalization over (batch, spatial) per channel of [N,C,...] (N >= 2).
// Returns the batch statistics so the caller can maintain running estimates.
struct BnTrainOut {
  Var y;
  Tensor mean;  // [C]
  Tensor var;   // [C], biased
};
BnTrainOut batch_norm_train(Tape* tape, const Var& x, const Var& gamma, const Var* beta,
                            double eps);
Var batch_norm_eval(Tape* tape, const Var& x, const Var& gamma, const Var* beta,
                    const Tensor& mean, const Tensor& var, double eps);

Var logistic(Tape* tape, const Var& x);

// [N, group*C] -> [N, C]: mean over consecutive groups of `group` units.
Var boost_avg(Tape* tape, const Var& potentials, int group);

// Sum of all elements -> scalar.
Var sum(Tape* tape, const Var& x);

// Mean over the batch of -log softmax(logits)[label]; max-subtraction
// stabilized. logits [N,C], labels values in [0, C).
Var cross_entropy(Tape* tape, const Var& logits, const std::vector<int>& labels);

// ---- pure value kernels (no tape) ----
Tensor heaviside_value(const Tensor& x, double u_th);
Tensor surrogate_value(const Tensor& u, double u_th, double alpha, bool center_at_threshold);
Tensor soft_spike_value(const Tensor& u, double u_th, double alpha, bool center_at_threshold);
double surrogate_scalar(double u, double u_th, double alpha, bool center_at_threshold);
double soft_spike_scalar(double u, double u_th, double alpha, bool center_at_threshold);
Tensor softmax_value(const Tensor& logits);

// ---- finite-difference validation ----
struct GradCheck {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  std::string worst;
};

// Central differences against analytic gradients. f() must recompute the
// objective from the current values of the probed tensors; each (id, tensor*)
// pair is perturbed elementwise and restored. Relative error uses
// |a - b| / max(|a|, |b|, 1e-8).
GradCheck finite_diff_gradcheck(const std::function<double()>& f,
                                const std::vector<std::pair<int, Tensor*>>& params,
                                const GradientStore& analytic, double eps);

}  // namespace spikegrid::ops
