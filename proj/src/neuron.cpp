#include "spikegrid/neuron.hpp"

#include <cmath>

namespace spikegrid {

LifOut lif_step(Tape* tape, LifState& state, const Var& input_current, const Var& leak,
                const LifParams& p) {
  if (leak.value.numel() != 1) {
    throw DimensionError("lif_step: leak must be a scalar, got " +
                         shape_str(leak.value.shape()));
  }
  Var u_pre;
  if (state.u.value.defined()) {
    if (!same_shape(state.u.value.shape(), input_current.value.shape())) {
      throw DimensionError("lif_step: state shape " + shape_str(state.u.value.shape()) +
                           " does not match input " + shape_str(input_current.value.shape()));
    }
    u_pre = ops::add(tape, input_current, ops::mul(tape, state.u, leak));
  } else {
    u_pre = input_current;
  }
  Var s = p.soft_forward ? ops::soft_spike(tape, u_pre, p.u_th, p.alpha, p.center_at_threshold)
                         : ops::spike(tape, u_pre, p.u_th, p.alpha, p.center_at_threshold);
  state.u = ops::sub(tape, u_pre, ops::scale(tape, s, p.u_th));
  return {s, u_pre};
}

Var leak_from_raw(Tape* tape, const Var& raw) { return ops::logistic(tape, raw); }

double raw_from_leak(double leak) {
  if (leak <= 0.0 || leak >= 1.0) {
    throw ContractError("raw_from_leak: leak must lie strictly inside (0,1)");
  }
  return std::log(leak / (1.0 - leak));
}

}  // namespace spikegrid
