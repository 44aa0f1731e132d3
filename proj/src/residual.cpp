#include "spikegrid/residual.hpp"

namespace spikegrid {

ResidualMode residual_mode_from_string(const std::string& s) {
  if (s == "s2m") return ResidualMode::s2m;
  if (s == "s2s") return ResidualMode::s2s;
  if (s == "v2v") return ResidualMode::v2v;
  throw ConfigError("unknown residual mode '" + s + "' (expected s2m, s2s or v2v)");
}

const char* to_string(ResidualMode m) {
  switch (m) {
    case ResidualMode::s2m: return "s2m";
    case ResidualMode::s2s: return "s2s";
    case ResidualMode::v2v: return "v2v";
  }
  return "?";
}

Var s2m_inject(Tape* tape, const Var& main_current, const Var& skip_spikes, double u_th) {
  return ops::add(tape, main_current, ops::scale(tape, skip_spikes, u_th));
}

Var s2s_combine(Tape* tape, const Var& spikes, const Var& skip) {
  return ops::add(tape, spikes, skip);
}

Var v2v_inject(Tape* tape, const Var& main_current, const Var& carrier) {
  return ops::add(tape, main_current, carrier);
}

}  // namespace spikegrid
