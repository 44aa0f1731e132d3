#include "spikegrid/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "spikegrid/ops.hpp"

namespace spikegrid {

namespace {

constexpr uint64_t kTagShuffle = 0x53485546ull;
constexpr uint64_t kTagAugment = 0x4155474dull;
constexpr uint64_t kTagEncode = 0x454e4342ull;
constexpr uint64_t kTagEval = 0x4556414cull;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

void Sgd::step(ParamStore& ps, const GradientStore& grads, double clip_norm) {
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (int id = 0; id < ps.size(); ++id) {
      if (!ps.at(id).learnable) continue;
      if (const Tensor* g = grads.find(id)) {
        for (double v : g->data()) sq += v * v;
      }
    }
    double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  for (int id = 0; id < ps.size(); ++id) {
    Param& p = ps.at(id);
    if (!p.learnable) continue;
    const Shape& shape = p.value.shape();
    DType dt = p.value.dtype();
    Tensor g = grads.get(id, shape, dt);
    auto it = buf_.find(id);
    const Tensor* vel = it == buf_.end() ? nullptr : &it->second;
    if (vel && !same_shape(vel->shape(), shape)) {
      throw ContractError("Sgd: momentum buffer shape drifted for parameter '" + p.name + "'");
    }
    int64_t n = p.value.numel();
    std::vector<double> v(static_cast<size_t>(n)), next(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      double gi = g[i] * scale;
      if (weight_decay_ != 0.0) gi += weight_decay_ * p.value[i];
      double vi = momentum_ * (vel ? (*vel)[i] : 0.0) + gi;
      v[static_cast<size_t>(i)] = vi;
      next[static_cast<size_t>(i)] = p.value[i] - lr_ * vi;
    }
    buf_[id] = Tensor::from(shape, std::move(v), dt);
    p.value = Tensor::from(shape, std::move(next), dt);
  }
}

double lr_at(double base, int epoch, int total_epochs, const std::vector<double>& milestones) {
  double lr = base;
  for (double m : milestones) {
    if (static_cast<double>(epoch) >= m * static_cast<double>(total_epochs) - 1e-12) lr *= 0.1;
  }
  return lr;
}

int64_t argmax_row(const Tensor& logits, int64_t row) {
  int64_t cols = logits.dim(1);
  int64_t base = row * cols;
  int64_t best = 0;
  double best_v = logits[base];
  for (int64_t j = 1; j < cols; ++j) {
    if (logits[base + j] > best_v) {
      best_v = logits[base + j];
      best = j;
    }
  }
  return best;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels, int64_t classes,
                std::vector<int64_t>* per_class_correct, std::vector<int64_t>* per_class_total) {
  if (logits.ndim() != 2) throw DimensionError("accuracy: logits must be [N, classes]");
  int64_t n = logits.dim(0);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw DimensionError("accuracy: got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (classes <= 0) classes = logits.dim(1);
  if (per_class_correct && static_cast<int64_t>(per_class_correct->size()) < classes) {
    per_class_correct->resize(static_cast<size_t>(classes), 0);
  }
  if (per_class_total && static_cast<int64_t>(per_class_total->size()) < classes) {
    per_class_total->resize(static_cast<size_t>(classes), 0);
  }
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= classes) {
      throw ContractError("accuracy: label " + std::to_string(label) + " out of range");
    }
    bool hit = argmax_row(logits, i) == label;
    correct += hit;
    if (per_class_total) (*per_class_total)[static_cast<size_t>(label)] += 1;
    if (per_class_correct && hit) (*per_class_correct)[static_cast<size_t>(label)] += 1;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

StepResult bptt_step(Network& net, Sgd& opt, const std::vector<Tensor>& frames,
                     const std::vector<int>& labels, double clip_norm,
                     const std::string& context) {
  try {
    Tape tape;
    Var out = net.forward(&tape, frames, true);
    Var loss = ops::cross_entropy(&tape, out, labels);
    double lv = loss.value[0];
    if (!std::isfinite(lv)) throw NumericError("training loss is not finite");
    GradientStore grads = tape.backward(loss.node);
    opt.step(net.params(), grads, clip_norm);
    return StepResult{lv, out.value};
  } catch (const NumericError& e) {
    if (context.empty()) throw;
    throw NumericError(std::string(e.what()) + " (" + context + ")");
  }
}

double evaluate(Network& net, const Dataset& ds, int batch, EncodeMode mode, uint64_t seed,
                int t_inf, std::vector<int64_t>* per_class_correct,
                std::vector<int64_t>* per_class_total) {
  if (ds.items.empty()) throw ContractError("evaluate: dataset is empty");
  if (batch < 1) throw ConfigError("evaluate: batch size must be >= 1");
  int T = t_inf > 0 ? t_inf : net.spec().timesteps;
  if (T > net.spec().timesteps) {
    throw ContractError("evaluate: inference window " + std::to_string(T) +
                        " exceeds the trained window " + std::to_string(net.spec().timesteps));
  }
  size_t n = ds.items.size();
  int64_t correct = 0;
  int batch_index = 0;
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch), ++batch_index) {
    size_t size = std::min(static_cast<size_t>(batch), n - start);
    std::vector<Tensor> images;
    std::vector<int> labels;
    images.reserve(size);
    labels.reserve(size);
    for (size_t k = 0; k < size; ++k) {
      images.push_back(ds.items[start + k].image);
      labels.push_back(ds.items[start + k].label);
    }
    std::vector<Tensor> frames =
        encode_batch(derive_seed(seed, kTagEval, static_cast<uint64_t>(batch_index)), images,
                     mode, T, net.spec().dtype);
    Var out = net.forward(nullptr, frames, false);
    for (size_t k = 0; k < size; ++k) {
      int label = labels[k];
      bool hit = argmax_row(out.value, static_cast<int64_t>(k)) == label;
      correct += hit;
      if (per_class_total) {
        if (static_cast<int64_t>(per_class_total->size()) < ds.classes) {
          per_class_total->resize(static_cast<size_t>(ds.classes), 0);
        }
        (*per_class_total)[static_cast<size_t>(label)] += 1;
      }
      if (per_class_correct) {
        if (static_cast<int64_t>(per_class_correct->size()) < ds.classes) {
          per_class_correct->resize(static_cast<size_t>(ds.classes), 0);
        }
        if (hit) (*per_class_correct)[static_cast<size_t>(label)] += 1;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

void write_checkpoint(const std::string& dir, const std::string& file, Network& net,
                      const TrainConfig& cfg, int epoch, const Sgd& opt) {
  CheckpointMeta meta;
  meta.spec = net.spec();
  meta.seed = cfg.seed;
  meta.epoch = epoch;
  meta.encode = to_string(cfg.encode);
  meta.config_text = cfg.config_text;
  std::vector<std::pair<std::string, Tensor>> extra;
  for (const auto& [id, v] : opt.buffers()) {
    extra.emplace_back("opt.momentum." + net.params().at(id).name, v);
  }
  save_checkpoint((std::filesystem::path(dir) / file).string(), net, meta, extra);
}

}  // namespace

TrainReport fit(Network& net, const Dataset& train_set, const Dataset& eval_set,
                const TrainConfig& cfg, std::ostream* log) {
  if (train_set.items.empty()) throw ContractError("fit: training set is empty");
  if (cfg.batch < 1) throw ConfigError("fit: batch size must be >= 1");
  if (cfg.epochs < 1) throw ConfigError("fit: epochs must be >= 1");
  for (double m : cfg.milestones) {
    if (m <= 0.0 || m > 1.0) throw ConfigError("fit: milestones must lie in (0, 1]");
  }
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  int T = net.spec().timesteps;
  // A single-row minibatch cannot be batch-normalized; the tail of the epoch
  // is dropped when the split leaves one sample over.
  bool skip_singletons = net.spec().norm != NormMode::none;
  size_t n = train_set.items.size();
  std::vector<size_t> order(n);
  Sgd opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  TrainReport report;
  bool targets = cfg.target_train_acc > 0.0 && cfg.target_eval_acc > 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(lr_at(cfg.lr, epoch, cfg.epochs, cfg.milestones));
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuf = Rng::derive(cfg.seed, kTagShuffle, static_cast<uint64_t>(epoch));
    for (size_t i = n - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(shuf.below(static_cast<int64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    size_t seen = 0;
    int64_t correct = 0;
    int batch_index = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch), ++batch_index) {
      size_t size = std::min(static_cast<size_t>(cfg.batch), n - start);
      if (size == 1 && skip_singletons) continue;
      std::vector<Tensor> images;
      std::vector<int> labels;
      images.reserve(size);
      labels.reserve(size);
      for (size_t k = 0; k < size; ++k) {
        size_t idx = order[start + k];
        const Sample& s = train_set.items[idx];
        Tensor img = s.image;
        if (cfg.augment) {
          Rng arng = Rng::derive(cfg.seed, kTagAugment, static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(idx));
          img = augment(arng, img, cfg.pad, img.dim(1), img.dim(2), cfg.hflip_p);
        }
        images.push_back(img);
        labels.push_back(s.label);
      }
      std::vector<Tensor> frames =
          encode_batch(derive_seed(cfg.seed, kTagEncode, static_cast<uint64_t>(epoch),
                                   static_cast<uint64_t>(batch_index)),
                       images, cfg.encode, T, net.spec().dtype);
      std::string context =
          "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index + 1);
      StepResult r = bptt_step(net, opt, frames, labels, cfg.clip_norm, context);
      loss_sum += r.loss * static_cast<double>(size);
      seen += size;
      for (size_t k = 0; k < size; ++k) {
        correct += argmax_row(r.logits, static_cast<int64_t>(k)) == labels[k];
      }
    }
    if (seen == 0) throw ContractError("fit: no usable minibatch (every batch had one sample)");

    EpochStats st;
    st.epoch = epoch + 1;
    st.lr = opt.lr();
    st.mean_loss = loss_sum / static_cast<double>(seen);
    st.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    int every = std::max(1, cfg.eval_every);
    bool do_eval = !eval_set.items.empty() &&
                   ((epoch + 1) % every == 0 || epoch + 1 == cfg.epochs ||
                    (targets && st.train_acc >= cfg.target_train_acc));
    if (do_eval) {
      st.eval_acc = evaluate(net, eval_set, cfg.batch, cfg.encode,
                             derive_seed(cfg.seed, kTagEval, static_cast<uint64_t>(epoch)));
    }
    report.epochs.push_back(st);
    if (log) {
      (*log) << "epoch " << st.epoch << "/" << cfg.epochs << "  lr " << fmt("%.6g", st.lr)
             << "  loss " << fmt("%.6f", st.mean_loss) << "  train " << fmt("%.4f", st.train_acc);
      if (st.eval_acc >= 0.0) (*log) << "  eval " << fmt("%.4f", st.eval_acc);
      (*log) << "\n";
      log->flush();
    }
    if (!cfg.out_dir.empty()) write_checkpoint(cfg.out_dir, "last.ckpt", net, cfg, st.epoch, opt);
    if (targets && st.train_acc >= cfg.target_train_acc && st.eval_acc >= cfg.target_eval_acc) {
      report.stopped_early = true;
      break;
    }
  }

  const EpochStats& last = report.epochs.back();
  report.final_train_acc = last.train_acc;
  report.final_eval_acc = last.eval_acc;
  for (const EpochStats& st : report.epochs) {
    if (st.eval_acc > report.best_eval_acc) {
      report.best_eval_acc = st.eval_acc;
      report.best_epoch = st.epoch;
    }
  }
  if (!cfg.out_dir.empty()) {
    write_checkpoint(cfg.out_dir, "final.ckpt", net, cfg, last.epoch, opt);
  }
  return report;
}

}  // namespace spikegrid
