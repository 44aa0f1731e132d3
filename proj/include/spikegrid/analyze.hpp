#pragma once

#include <string>
#include <vector>

#include "spikegrid/data.hpp"
#include "spikegrid/encode.hpp"
#include "spikegrid/network.hpp"

namespace spikegrid {

// Per-site, per-timestep firing statistics over a dataset. fraction[i][t] is
// the share of entries that were active (> 0) at site i on step t; volume is
// the mean emitted value, which coincides with fraction for binary spikes but
// not after residual sums.
struct ActivityMap {
  std::vector<std::string> layers;
  std::vector<std::vector<double>> fraction;
  std::vector<std::vector<double>> volume;
  std::vector<std::vector<int64_t>> active;  // raw active-entry counts
  std::vector<std::vector<int64_t>> total;   // raw entry counts
  int timesteps = 0;
};

ActivityMap activity_map(Network& net, const Dataset& ds, int batch, EncodeMode mode,
                         uint64_t seed, int t_inf = 0);

// Channel-mean learned scale of every site's normalization layer, per step.
struct GammaMap {
  std::vector<std::string> layers;
  std::vector<std::vector<double>> gamma;
  int timesteps = 0;
};

GammaMap gamma_map(Network& net);

// "layer,t,value" rows, layer-major, t starting at 1, values through %.9g.
// The same inputs yield byte-identical text on every platform.
std::string series_csv(const std::vector<std::string>& layers,
                       const std::vector<std::vector<double>>& series);

}  // namespace spikegrid
