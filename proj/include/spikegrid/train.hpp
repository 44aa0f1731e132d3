#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "spikegrid/data.hpp"
#include "spikegrid/encode.hpp"
#include "spikegrid/network.hpp"

namespace spikegrid {

struct TrainConfig {
  double lr = 0.0268;
  int batch = 21;
  int epochs = 70;
  double momentum = 0.9;
  double weight_decay = 0.0;
  // Fractions of the epoch budget; the rate divides by 10 at each one.
  std::vector<double> milestones = {0.7, 0.8, 0.9};
  double clip_norm = 0.0;  // 0 disables gradient clipping
  uint64_t seed = 1;
  EncodeMode encode = EncodeMode::direct;
  bool augment = false;
  int pad = 4;
  double hflip_p = 0.5;
  int eval_every = 1;  // epochs between held-out evaluations
  // When both are positive, training stops at the first evaluated epoch
  // whose running train accuracy and eval accuracy reach them.
  double target_train_acc = 0.0;
  double target_eval_acc = 0.0;
  std::string out_dir;       // empty: keep everything in memory
  std::string config_text;   // resolved run configuration, stored in checkpoints
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = -1.0;  // -1 when this epoch was not evaluated
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double final_train_acc = 0.0;
  double final_eval_acc = -1.0;
  double best_eval_acc = -1.0;
  int best_epoch = 0;
  bool stopped_early = false;
};

// Momentum SGD: v <- momentum*v + g, p <- p - lr*v. Buffers appear on first
// use and are keyed by parameter id.
class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay = 0.0)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  // Applies one update to every learnable parameter. clip_norm > 0 rescales
  // the whole gradient so its global L2 norm does not exceed it.
  void step(ParamStore& ps, const GradientStore& grads, double clip_norm = 0.0);

  const std::map<int, Tensor>& buffers() const { return buf_; }
  void set_buffer(int id, Tensor v) { buf_[id] = std::move(v); }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::map<int, Tensor> buf_;
};

// Step-decay schedule: base rate divided by 10 at each milestone fraction of
// the total budget. epoch is 0-based.
double lr_at(double base, int epoch, int total_epochs, const std::vector<double>& milestones);

// Index of the row maximum; the lowest index wins ties.
int64_t argmax_row(const Tensor& logits, int64_t row);

// Fraction of rows whose argmax equals the label. The per-class vectors, when
// given, are resized to `classes` and accumulated into.
double accuracy(const Tensor& logits, const std::vector<int>& labels, int64_t classes = 0,
                std::vector<int64_t>* per_class_correct = nullptr,
                std::vector<int64_t>* per_class_total = nullptr);

struct StepResult {
  double loss = 0.0;
  Tensor logits;
};

// One BPTT update: forward over the whole window, cross-entropy on the
// averaged readout, reverse sweep, optimizer step. `context` is appended to
// numeric failure messages ("epoch 3, batch 12").
StepResult bptt_step(Network& net, Sgd& opt, const std::vector<Tensor>& frames,
                     const std::vector<int>& labels, double clip_norm,
                     const std::string& context);

// Accuracy over a dataset in eval mode. t_inf > 0 runs a shortened window of
// that many steps (it must not exceed the trained window).
double evaluate(Network& net, const Dataset& ds, int batch, EncodeMode mode, uint64_t seed,
                int t_inf = 0, std::vector<int64_t>* per_class_correct = nullptr,
                std::vector<int64_t>* per_class_total = nullptr);

// Full training loop: shuffled minibatches, encoding, BPTT, schedule, optional
// early stop on accuracy targets, per-epoch checkpointing into cfg.out_dir.
TrainReport fit(Network& net, const Dataset& train_set, const Dataset& eval_set,
                const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace spikegrid
