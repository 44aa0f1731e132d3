#pragma once

#include "spikegrid/ops.hpp"
#include "spikegrid/tape.hpp"

namespace spikegrid {

enum class LeakMode { fixed, plif_shared, plif_layer };

struct LifParams {
  double u_th = 1.0;
  double alpha = 0.3;
  bool center_at_threshold = true;
  // Replace the hard step with its smooth companion so the whole forward pass
  // becomes differentiable (used by the finite-difference checks).
  bool soft_forward = false;
};

struct LifState {
  Var u;  // membrane potential after the last reset; undefined means zero
};

struct LifOut {
  Var spikes;
  Var u_pre;  // potential the threshold saw, before reset
};

// One integrate-and-fire step:
//   u' = input_current + leak * u_prev
//   s  = step(u' - u_th)        (spike when u' >= u_th)
//   u  = u' - u_th * s
// The reset stays on the tape, so gradients flow through both the spike and
// the subtraction.
LifOut lif_step(Tape* tape, LifState& state, const Var& input_current, const Var& leak,
                const LifParams& p);

// Learnable leaks are stored unconstrained and squashed into (0,1).
Var leak_from_raw(Tape* tape, const Var& raw);
double raw_from_leak(double leak);

}  // namespace spikegrid
