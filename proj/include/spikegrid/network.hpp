#pragma once

#include <string>
#include <vector>

#include "spikegrid/layers.hpp"
#include "spikegrid/neuron.hpp"
#include "spikegrid/residual.hpp"

namespace spikegrid {

enum class Arch { sresnet, vgg11 };
enum class NormMode { per_step, time_avg, none };

Arch arch_from_string(const std::string& s);
const char* to_string(Arch a);
NormMode norm_mode_from_string(const std::string& s);
const char* to_string(NormMode m);

struct NetSpec {
  Arch arch = Arch::sresnet;
  int64_t input_channels = 3;
  int64_t input_size = 32;  // expected square spatial extent; picks the stem
  int64_t base_width = 16;  // residual stage widths are base, 2*base, 4*base
  int blocks_per_stage = 6;
  int64_t classes = 10;
  int timesteps = 50;
  ResidualMode residual = ResidualMode::v2v;
  LeakMode leak_mode = LeakMode::fixed;
  double leak_init = 0.874;
  LifParams lif;
  NormMode norm = NormMode::per_step;
  bool learn_beta = false;
  bool fc_bias = false;
  bool boosting = false;  // widen the readout by boost_group and average back
  int boost_group = 10;
  DType dtype = DType::f64;
};

// Observer for per-site activations and per-step readout currents. Sites are
// the spiking layers in forward order; the value handed over is the layer's
// outgoing activation (binary spikes everywhere except after an s2s sum).
struct SpikeRecorder {
  virtual void on_spikes(int site, int t, const Tensor& value) = 0;
  virtual void on_readout(int t, const Tensor& current) { (void)t; (void)current; }
  virtual ~SpikeRecorder() = default;
};

class Network {
 public:
  Network(NetSpec spec, Rng& rng);

  const NetSpec& spec() const { return spec_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  // Run the full time window; frames holds one [N,C,H,W] tensor per timestep.
  // Returns averaged readout potentials, shape [N, classes].
  Var forward(Tape* tape, const std::vector<Tensor>& frames, bool train,
              SpikeRecorder* rec = nullptr);

  int sites() const { return static_cast<int>(site_names_.size()); }
  const std::string& site_name(int i) const { return site_names_[static_cast<size_t>(i)]; }
  int conv_depth() const;
  std::vector<TemporalBatchNorm*> norm_layers();  // every norm, checkpoint order
  std::vector<TemporalBatchNorm*> site_norms();   // one per site (no skip paths)

 private:
  struct Block {
    Conv2d conv1, conv2;
    TemporalBatchNorm bn1, bn2;
    bool has_proj = false;
    Conv2d proj;
    TemporalBatchNorm proj_bn;
  };
  struct VggLayer {
    Conv2d conv;
    TemporalBatchNorm bn;
    bool pool_after = false;
  };

  Var leak(Tape* tape, int site);
  Var norm_or_pass(Tape* tape, TemporalBatchNorm& bn, const Var& x, int t, bool train);
  Var forward_sresnet(Tape* tape, const std::vector<Tensor>& frames, bool train,
                      SpikeRecorder* rec);
  Var forward_vgg(Tape* tape, const std::vector<Tensor>& frames, bool train,
                  SpikeRecorder* rec);
  Var readout(Tape* tape, const Var& acc, int T);

  NetSpec spec_;
  ParamStore ps_;
  Conv2d stem_;
  TemporalBatchNorm stem_bn_;
  bool stem_pool_ = false;
  std::vector<Block> blocks_;
  std::vector<VggLayer> vgg_;
  Linear fc_;
  Tensor leak_const_;
  std::vector<int> leak_param_;  // one id (shared) or one per site
  std::vector<std::string> site_names_;
};

}  // namespace spikegrid
