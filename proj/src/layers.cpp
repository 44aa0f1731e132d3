#include "spikegrid/layers.hpp"

#include <cmath>

namespace spikegrid {

int ParamStore::add(const std::string& name, Tensor value, bool learnable) {
  if (index_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
  int id = static_cast<int>(items_.size());
  items_.push_back(Param{name, std::move(value), learnable});
  index_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

Param& ParamStore::at(int id) {
  if (id < 0 || id >= size()) {
    throw ContractError("parameter id " + std::to_string(id) + " out of range");
  }
  return items_[static_cast<size_t>(id)];
}

const Param& ParamStore::at(int id) const {
  if (id < 0 || id >= size()) {
    throw ContractError("parameter id " + std::to_string(id) + " out of range");
  }
  return items_[static_cast<size_t>(id)];
}

int64_t ParamStore::learnable_scalars() const {
  int64_t n = 0;
  for (const Param& p : items_) {
    if (p.learnable) n += p.value.numel();
  }
  return n;
}

Var ParamStore::use(Tape* tape, int id) const {
  const Param& p = at(id);
  if (!tape || !p.learnable) return Var(p.value);
  return tape->leaf(p.value, id);
}

Tensor conv_weight_init(Rng& rng, int64_t out_ch, int64_t in_ch, int64_t kh, int64_t kw,
                        DType dt) {
  int64_t fan_in = in_ch * kh * kw;
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(out_ch * fan_in));
  for (double& x : v) x = rng.normal() * std;
  return Tensor::from({out_ch, in_ch, kh, kw}, std::move(v), dt);
}

Tensor linear_weight_init(Rng& rng, int64_t out, int64_t in, DType dt) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> v(static_cast<size_t>(out * in));
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor::from({out, in}, std::move(v), dt);
}

Var Conv2d::operator()(Tape* tape, const ParamStore& ps, const Var& x) const {
  return ops::conv2d(tape, x, ps.use(tape, w), stride, padding);
}

Var Linear::operator()(Tape* tape, const ParamStore& ps, const Var& x) const {
  if (b < 0) return ops::linear(tape, x, ps.use(tape, w), nullptr);
  Var bias = ps.use(tape, b);
  return ops::linear(tape, x, ps.use(tape, w), &bias);
}

TemporalBatchNorm::TemporalBatchNorm(ParamStore& ps, const std::string& name, int64_t channels,
                                     int timesteps, bool learn_beta, bool time_avg, DType dt,
                                     double eps, double momentum)
    : name_(name), channels_(channels), eps_(eps), momentum_(momentum), time_avg_(time_avg) {
  if (timesteps < 1) throw ContractError("TemporalBatchNorm: needs at least one timestep");
  int n = time_avg ? 1 : timesteps;
  for (int s = 0; s < n; ++s) {
    std::string base = name + ".t" + std::to_string(s);
    gamma_.push_back(ps.add(base + ".gamma", Tensor::full({channels}, 1.0, dt)));
    if (learn_beta) beta_.push_back(ps.add(base + ".beta", Tensor::zeros({channels}, dt)));
    run_mean_.push_back(Tensor::zeros({channels}, dt));
    run_var_.push_back(Tensor::full({channels}, 1.0, dt));
  }
}

int TemporalBatchNorm::slot(int t) const {
  if (time_avg_) return 0;
  if (t < 0 || t >= slots()) {
    throw ContractError(name_ + ": timestep " + std::to_string(t) +
                        " outside the normalized range [0," + std::to_string(slots()) + ")");
  }
  return t;
}

Var TemporalBatchNorm::forward(Tape* tape, const ParamStore& ps, const Var& x, int t,
                               bool train) {
  int s = slot(t);
  Var gamma = ps.use(tape, gamma_[static_cast<size_t>(s)]);
  Var beta;
  const Var* beta_p = nullptr;
  if (!beta_.empty()) {
    beta = ps.use(tape, beta_[static_cast<size_t>(s)]);
    beta_p = &beta;
  }
  if (train) {
    ops::BnTrainOut out = ops::batch_norm_train(tape, x, gamma, beta_p, eps_);
    Tensor& rm = run_mean_[static_cast<size_t>(s)];
    Tensor& rv = run_var_[static_cast<size_t>(s)];
    std::vector<double> m(static_cast<size_t>(channels_));
    std::vector<double> v(static_cast<size_t>(channels_));
    for (int64_t c = 0; c < channels_; ++c) {
      m[static_cast<size_t>(c)] = quantize(
          (1.0 - momentum_) * rm[c] + momentum_ * out.mean[c], x.value.dtype());
      v[static_cast<size_t>(c)] = quantize(
          (1.0 - momentum_) * rv[c] + momentum_ * out.var[c], x.value.dtype());
    }
    rm = Tensor::from({channels_}, std::move(m), x.value.dtype());
    rv = Tensor::from({channels_}, std::move(v), x.value.dtype());
    return out.y;
  }
  return ops::batch_norm_eval(tape, x, gamma, beta_p, run_mean_[static_cast<size_t>(s)],
                              run_var_[static_cast<size_t>(s)], eps_);
}

}  // namespace spikegrid
