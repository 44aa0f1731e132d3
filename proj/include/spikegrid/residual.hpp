#pragma once

#include <string>

#include "spikegrid/ops.hpp"
#include "spikegrid/tape.hpp"

namespace spikegrid {

enum class ResidualMode { s2m, s2s, v2v };

ResidualMode residual_mode_from_string(const std::string& s);
const char* to_string(ResidualMode m);

// Spike-to-membrane: skip spikes enter the target membrane as extra current,
// scaled by the firing threshold so one spike carries one threshold's worth.
Var s2m_inject(Tape* tape, const Var& main_current, const Var& skip_spikes, double u_th);

// Spike-to-spike: addition after the spike function; the skip path bypasses
// the neuron entirely, so its gradient is exactly one.
Var s2s_combine(Tape* tape, const Var& spikes, const Var& skip);

// Value-to-value: a real-valued carrier rides along the block chain. The sum
// both drives the neuron and becomes the carrier handed to the next block,
// so the carrier reaching block k is the sum of all preceding block currents.
Var v2v_inject(Tape* tape, const Var& main_current, const Var& carrier);

}  // namespace spikegrid
