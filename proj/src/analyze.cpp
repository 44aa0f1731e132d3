#include "spikegrid/analyze.hpp"

#include <algorithm>
#include <cstdio>

namespace spikegrid {

namespace {

constexpr uint64_t kTagAnalyze = 0x414e4c5aull;

struct ActivityAccum : SpikeRecorder {
  ActivityAccum(int sites, int T)
      : active(static_cast<size_t>(sites), std::vector<int64_t>(static_cast<size_t>(T), 0)),
        total(static_cast<size_t>(sites), std::vector<int64_t>(static_cast<size_t>(T), 0)),
        value_sum(static_cast<size_t>(sites), std::vector<double>(static_cast<size_t>(T), 0.0)) {}

  void on_spikes(int site, int t, const Tensor& value) override {
    int64_t act = 0;
    double sum = 0.0;
    for (double x : value.data()) {
      act += x > 0.0;
      sum += x;
    }
    auto s = static_cast<size_t>(site);
    auto ts = static_cast<size_t>(t);
    active[s][ts] += act;
    total[s][ts] += value.numel();
    value_sum[s][ts] += sum;
  }

  std::vector<std::vector<int64_t>> active;
  std::vector<std::vector<int64_t>> total;
  std::vector<std::vector<double>> value_sum;
};

}  // namespace

ActivityMap activity_map(Network& net, const Dataset& ds, int batch, EncodeMode mode,
                         uint64_t seed, int t_inf) {
  if (ds.items.empty()) throw ContractError("activity_map: dataset is empty");
  if (batch < 1) throw ConfigError("activity_map: batch size must be >= 1");
  int T = t_inf > 0 ? t_inf : net.spec().timesteps;
  if (T > net.spec().timesteps) {
    throw ContractError("activity_map: window " + std::to_string(T) +
                        " exceeds the trained window " + std::to_string(net.spec().timesteps));
  }
  ActivityAccum acc(net.sites(), T);
  size_t n = ds.items.size();
  int batch_index = 0;
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch), ++batch_index) {
    size_t size = std::min(static_cast<size_t>(batch), n - start);
    std::vector<Tensor> images;
    images.reserve(size);
    for (size_t k = 0; k < size; ++k) images.push_back(ds.items[start + k].image);
    std::vector<Tensor> frames =
        encode_batch(derive_seed(seed, kTagAnalyze, static_cast<uint64_t>(batch_index)), images,
                     mode, T, net.spec().dtype);
    net.forward(nullptr, frames, false, &acc);
  }

  ActivityMap map;
  map.timesteps = T;
  for (int i = 0; i < net.sites(); ++i) map.layers.push_back(net.site_name(i));
  map.active = acc.active;
  map.total = acc.total;
  map.fraction.resize(map.layers.size());
  map.volume.resize(map.layers.size());
  for (size_t i = 0; i < map.layers.size(); ++i) {
    map.fraction[i].resize(static_cast<size_t>(T));
    map.volume[i].resize(static_cast<size_t>(T));
    for (size_t t = 0; t < static_cast<size_t>(T); ++t) {
      auto tot = static_cast<double>(acc.total[i][t]);
      map.fraction[i][t] = static_cast<double>(acc.active[i][t]) / tot;
      map.volume[i][t] = acc.value_sum[i][t] / tot;
    }
  }
  return map;
}

GammaMap gamma_map(Network& net) {
  if (net.spec().norm == NormMode::none) {
    throw ConfigError("gamma_map: the network was built without normalization");
  }
  GammaMap map;
  map.timesteps = net.spec().timesteps;
  std::vector<TemporalBatchNorm*> norms = net.site_norms();
  for (int i = 0; i < net.sites(); ++i) map.layers.push_back(net.site_name(i));
  map.gamma.resize(map.layers.size());
  for (size_t i = 0; i < norms.size(); ++i) {
    TemporalBatchNorm* bn = norms[i];
    map.gamma[i].resize(static_cast<size_t>(map.timesteps));
    for (int t = 0; t < map.timesteps; ++t) {
      int gid = net.params().find(bn->name() + ".t" + std::to_string(bn->slot(t)) + ".gamma");
      if (gid < 0) throw ContractError("gamma_map: missing scale for " + bn->name());
      const Tensor& g = net.params().at(gid).value;
      double sum = 0.0;
      for (double v : g.data()) sum += v;
      map.gamma[i][static_cast<size_t>(t)] = sum / static_cast<double>(g.numel());
    }
  }
  return map;
}

std::string series_csv(const std::vector<std::string>& layers,
                       const std::vector<std::vector<double>>& series) {
  if (layers.size() != series.size()) {
    throw DimensionError("series_csv: layer names and series differ in count");
  }
  std::string out = "layer,t,value\n";
  char buf[48];
  for (size_t i = 0; i < layers.size(); ++i) {
    for (size_t t = 0; t < series[i].size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.9g", series[i][t]);
      out += layers[i];
      out += ',';
      out += std::to_string(t + 1);
      out += ',';
      out += buf;
      out += '\n';
    }
  }
  return out;
}

}  // namespace spikegrid
