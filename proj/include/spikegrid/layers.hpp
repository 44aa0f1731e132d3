#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "spikegrid/ops.hpp"
#include "spikegrid/tape.hpp"

namespace spikegrid {

struct Param {
  std::string name;
  Tensor value;
  bool learnable = true;
};

class ParamStore {
 public:
  int add(const std::string& name, Tensor value, bool learnable = true);
  int find(const std::string& name) const;  // -1 when absent
  Param& at(int id);
  const Param& at(int id) const;
  int size() const { return static_cast<int>(items_.size()); }
  int64_t learnable_scalars() const;
  // Leaf the parameter onto the tape (when live and learnable) or hand back
  // its plain value. Repeated use of one parameter accumulates gradient.
  Var use(Tape* tape, int id) const;
  std::vector<Param>& items() { return items_; }
  const std::vector<Param>& items() const { return items_; }

 private:
  std::vector<Param> items_;
  std::unordered_map<std::string, int> index_;
};

// Gaussian with variance 2/fan_in, fan_in = in_ch*kh*kw.
Tensor conv_weight_init(Rng& rng, int64_t out_ch, int64_t in_ch, int64_t kh, int64_t kw,
                        DType dt);
// Uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor linear_weight_init(Rng& rng, int64_t out, int64_t in, DType dt);

struct Conv2d {
  int w = -1;
  int stride = 1;
  int padding = 0;
  Var operator()(Tape* tape, const ParamStore& ps, const Var& x) const;
};

struct Linear {
  int w = -1;
  int b = -1;  // -1: no bias term
  Var operator()(Tape* tape, const ParamStore& ps, const Var& x) const;
};

// Batch normalization with an independent affine scale per timestep. Running
// statistics are kept per timestep as well and drive eval-mode normalization.
// time_avg collapses everything to a single shared slot.
class TemporalBatchNorm {
 public:
  TemporalBatchNorm() = default;
  TemporalBatchNorm(ParamStore& ps, const std::string& name, int64_t channels, int timesteps,
                    bool learn_beta, bool time_avg, DType dt, double eps = 1e-5,
                    double momentum = 0.1);

  Var forward(Tape* tape, const ParamStore& ps, const Var& x, int t, bool train);

  int slots() const { return static_cast<int>(gamma_.size()); }
  int slot(int t) const;
  int64_t channels() const { return channels_; }
  double eps() const { return eps_; }

  // Running statistics, exposed for checkpointing.
  Tensor& running_mean(int s) { return run_mean_[static_cast<size_t>(s)]; }
  Tensor& running_var(int s) { return run_var_[static_cast<size_t>(s)]; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int64_t channels_ = 0;
  std::vector<int> gamma_;
  std::vector<int> beta_;  // empty when beta is disabled
  std::vector<Tensor> run_mean_;
  std::vector<Tensor> run_var_;
  double eps_ = 1e-5;
  double momentum_ = 0.1;
  bool time_avg_ = false;
};

}  // namespace spikegrid
