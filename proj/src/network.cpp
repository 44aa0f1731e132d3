#include "spikegrid/network.hpp"

namespace spikegrid {

namespace {

void validate_spec(const NetSpec& s) {
  if (s.input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (s.input_size < 8) throw ConfigError("input_size must be >= 8");
  if (s.arch == Arch::vgg11 && s.input_size < 32) {
    throw ConfigError("vgg11 needs input_size >= 32 (five halvings)");
  }
  if (s.base_width < 1) throw ConfigError("base_width must be >= 1");
  if (s.blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (s.classes < 2) throw ConfigError("classes must be >= 2");
  if (s.timesteps < 1) throw ConfigError("timesteps must be >= 1");
  if (s.leak_init <= 0.0 || s.leak_init >= 1.0) {
    throw ConfigError("leak must lie strictly inside (0,1)");
  }
  if (s.lif.u_th <= 0.0) throw ConfigError("threshold must be positive");
  if (s.lif.alpha <= 0.0) throw ConfigError("surrogate slope must be positive");
  if (s.boosting && s.boost_group < 2) throw ConfigError("boost_group must be >= 2");
}

}  // namespace

Arch arch_from_string(const std::string& s) {
  if (s == "sresnet") return Arch::sresnet;
  if (s == "vgg11") return Arch::vgg11;
  throw ConfigError("unknown arch '" + s + "' (expected sresnet or vgg11)");
}

const char* to_string(Arch a) { return a == Arch::sresnet ? "sresnet" : "vgg11"; }

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "per_step") return NormMode::per_step;
  if (s == "time_avg") return NormMode::time_avg;
  if (s == "none") return NormMode::none;
  throw ConfigError("unknown norm mode '" + s + "' (expected per_step, time_avg or none)");
}

const char* to_string(NormMode m) {
  switch (m) {
    case NormMode::per_step: return "per_step";
    case NormMode::time_avg: return "time_avg";
    case NormMode::none: return "none";
  }
  return "?";
}

Network::Network(NetSpec spec, Rng& rng) : spec_(std::move(spec)) {
  validate_spec(spec_);
  DType dt = spec_.dtype;
  int T = spec_.timesteps;
  bool ta = spec_.norm == NormMode::time_avg;
  bool has_norm = spec_.norm != NormMode::none;
  bool lb = spec_.learn_beta;
  int64_t w1 = spec_.base_width;
  auto make_norm = [&](const std::string& name, int64_t ch) {
    return has_norm ? TemporalBatchNorm(ps_, name, ch, T, lb, ta, dt) : TemporalBatchNorm();
  };

  int64_t head_in = 0;
  if (spec_.arch == Arch::vgg11) {
    // Widths follow the classic 11-layer plan, scaled from base 16.
    const int64_t mult[8] = {4, 8, 16, 16, 32, 32, 32, 32};
    const bool pool[8] = {true, true, false, true, false, true, false, true};
    int64_t in_c = spec_.input_channels;
    for (int i = 0; i < 8; ++i) {
      int64_t out_c = w1 * mult[i];
      std::string base = "conv" + std::to_string(i + 1);
      VggLayer l;
      l.conv = Conv2d{ps_.add(base + ".w", conv_weight_init(rng, out_c, in_c, 3, 3, dt)), 1, 1};
      l.bn = make_norm(base + ".norm", out_c);
      l.pool_after = pool[i];
      vgg_.push_back(std::move(l));
      site_names_.push_back(base);
      in_c = out_c;
    }
    head_in = in_c;
  } else {
    if (spec_.input_size >= 96) {
      stem_ = Conv2d{ps_.add("stem.conv.w",
                             conv_weight_init(rng, w1, spec_.input_channels, 5, 5, dt)),
                     2, 2};
      stem_pool_ = true;
    } else if (spec_.input_size >= 48) {
      stem_ = Conv2d{ps_.add("stem.conv.w",
                             conv_weight_init(rng, w1, spec_.input_channels, 3, 3, dt)),
                     2, 1};
    } else {
      stem_ = Conv2d{ps_.add("stem.conv.w",
                             conv_weight_init(rng, w1, spec_.input_channels, 3, 3, dt)),
                     1, 1};
    }
    stem_bn_ = make_norm("stem.norm", w1);
    site_names_.push_back("stem");

    int64_t widths[3] = {w1, w1 * 2, w1 * 4};
    int64_t in_c = w1;
    for (int s = 0; s < 3; ++s) {
      for (int b = 0; b < spec_.blocks_per_stage; ++b) {
        int stride = (s > 0 && b == 0) ? 2 : 1;
        int64_t out_c = widths[s];
        std::string base = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
        Block blk;
        blk.conv1 =
            Conv2d{ps_.add(base + ".conv1.w", conv_weight_init(rng, out_c, in_c, 3, 3, dt)),
                   stride, 1};
        blk.bn1 = make_norm(base + ".norm1", out_c);
        blk.conv2 =
            Conv2d{ps_.add(base + ".conv2.w", conv_weight_init(rng, out_c, out_c, 3, 3, dt)),
                   1, 1};
        blk.bn2 = make_norm(base + ".norm2", out_c);
        blk.has_proj = stride != 1 || in_c != out_c;
        if (blk.has_proj) {
          blk.proj =
              Conv2d{ps_.add(base + ".skip.w", conv_weight_init(rng, out_c, in_c, 1, 1, dt)),
                     stride, 0};
          blk.proj_bn = make_norm(base + ".skipnorm", out_c);
        }
        site_names_.push_back(base + ".lif1");
        site_names_.push_back(base + ".lif2");
        blocks_.push_back(std::move(blk));
        in_c = out_c;
      }
    }
    head_in = widths[2];
  }

  int64_t fc_out = spec_.boosting ? spec_.classes * spec_.boost_group : spec_.classes;
  fc_.w = ps_.add("head.w", linear_weight_init(rng, fc_out, head_in, dt));
  if (spec_.fc_bias) fc_.b = ps_.add("head.b", Tensor::zeros({fc_out}, dt));

  double raw0 = raw_from_leak(spec_.leak_init);
  if (spec_.leak_mode == LeakMode::plif_shared) {
    leak_param_.push_back(ps_.add("leak.raw", Tensor::scalar(raw0, dt)));
  } else if (spec_.leak_mode == LeakMode::plif_layer) {
    for (const std::string& name : site_names_) {
      leak_param_.push_back(ps_.add("leak." + name + ".raw", Tensor::scalar(raw0, dt)));
    }
  } else {
    leak_const_ = Tensor::scalar(spec_.leak_init, dt);
  }
}

int Network::conv_depth() const {
  return spec_.arch == Arch::vgg11 ? static_cast<int>(vgg_.size())
                                   : 6 * spec_.blocks_per_stage + 1;
}

Var Network::leak(Tape* tape, int site) {
  switch (spec_.leak_mode) {
    case LeakMode::fixed:
      return Var(leak_const_);
    case LeakMode::plif_shared:
      return leak_from_raw(tape, ps_.use(tape, leak_param_[0]));
    case LeakMode::plif_layer:
      return leak_from_raw(tape, ps_.use(tape, leak_param_[static_cast<size_t>(site)]));
  }
  throw ContractError("unhandled leak mode");
}

Var Network::norm_or_pass(Tape* tape, TemporalBatchNorm& bn, const Var& x, int t, bool train) {
  if (spec_.norm == NormMode::none) return x;
  return bn.forward(tape, ps_, x, t, train);
}

std::vector<TemporalBatchNorm*> Network::norm_layers() {
  std::vector<TemporalBatchNorm*> out;
  if (spec_.norm == NormMode::none) return out;
  if (spec_.arch == Arch::vgg11) {
    for (VggLayer& l : vgg_) out.push_back(&l.bn);
    return out;
  }
  out.push_back(&stem_bn_);
  for (Block& b : blocks_) {
    out.push_back(&b.bn1);
    out.push_back(&b.bn2);
    if (b.has_proj) out.push_back(&b.proj_bn);
  }
  return out;
}

std::vector<TemporalBatchNorm*> Network::site_norms() {
  std::vector<TemporalBatchNorm*> out;
  if (spec_.norm == NormMode::none) return out;
  if (spec_.arch == Arch::vgg11) {
    for (VggLayer& l : vgg_) out.push_back(&l.bn);
    return out;
  }
  out.push_back(&stem_bn_);
  for (Block& b : blocks_) {
    out.push_back(&b.bn1);
    out.push_back(&b.bn2);
  }
  return out;
}

Var Network::readout(Tape* tape, const Var& acc, int T) {
  Var logits = ops::scale(tape, acc, 1.0 / static_cast<double>(T));
  if (spec_.boosting) logits = ops::boost_avg(tape, logits, spec_.boost_group);
  return logits;
}

Var Network::forward(Tape* tape, const std::vector<Tensor>& frames, bool train,
                     SpikeRecorder* rec) {
  if (frames.empty()) throw ContractError("forward: need at least one timestep");
  const Tensor& f0 = frames[0];
  if (f0.ndim() != 4) {
    throw DimensionError("forward: frames must be [N,C,H,W], got " + shape_str(f0.shape()));
  }
  if (f0.dim(1) != spec_.input_channels || f0.dim(2) != spec_.input_size ||
      f0.dim(3) != spec_.input_size) {
    throw DimensionError("forward: expected frames [N," + std::to_string(spec_.input_channels) +
                         "," + std::to_string(spec_.input_size) + "," +
                         std::to_string(spec_.input_size) + "], got " + shape_str(f0.shape()));
  }
  for (const Tensor& f : frames) {
    if (!same_shape(f.shape(), f0.shape())) {
      throw DimensionError("forward: all frames must share one shape");
    }
    if (f.dtype() != spec_.dtype) {
      throw DimensionError("forward: frame precision does not match the network");
    }
  }
  if (spec_.norm == NormMode::per_step && static_cast<int>(frames.size()) > spec_.timesteps) {
    throw ContractError("forward: " + std::to_string(frames.size()) +
                        " timesteps but normalization statistics exist for " +
                        std::to_string(spec_.timesteps) +
                        "; evaluate a prefix (early stop) or rebuild the network");
  }
  return spec_.arch == Arch::vgg11 ? forward_vgg(tape, frames, train, rec)
                                   : forward_sresnet(tape, frames, train, rec);
}

Var Network::forward_sresnet(Tape* tape, const std::vector<Tensor>& frames, bool train,
                             SpikeRecorder* rec) {
  int T = static_cast<int>(frames.size());
  LifState stem_state;
  std::vector<LifState> st1(blocks_.size());
  std::vector<LifState> st2(blocks_.size());
  Var acc;
  for (int t = 0; t < T; ++t) {
    Var x(frames[static_cast<size_t>(t)]);
    Var cur = stem_(tape, ps_, x);
    cur = norm_or_pass(tape, stem_bn_, cur, t, train);
    if (stem_pool_) cur = ops::pool2d(tape, cur, PoolKind::max, 2, 2);
    LifOut so = lif_step(tape, stem_state, cur, leak(tape, 0), spec_.lif);
    if (rec) rec->on_spikes(0, t, so.spikes.value);
    Var s = so.spikes;
    Var carrier = cur;
    int site = 1;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      Block& blk = blocks_[i];
      Var c1 = norm_or_pass(tape, blk.bn1, blk.conv1(tape, ps_, s), t, train);
      LifOut o1 = lif_step(tape, st1[i], c1, leak(tape, site), spec_.lif);
      if (rec) rec->on_spikes(site, t, o1.spikes.value);
      ++site;
      Var c2 = norm_or_pass(tape, blk.bn2, blk.conv2(tape, ps_, o1.spikes), t, train);
      Var skip_src = spec_.residual == ResidualMode::v2v ? carrier : s;
      Var skip =
          blk.has_proj
              ? norm_or_pass(tape, blk.proj_bn, blk.proj(tape, ps_, skip_src), t, train)
              : skip_src;
      Var out;
      switch (spec_.residual) {
        case ResidualMode::s2m: {
          Var total = s2m_inject(tape, c2, skip, spec_.lif.u_th);
          LifOut o2 = lif_step(tape, st2[i], total, leak(tape, site), spec_.lif);
          out = o2.spikes;
          break;
        }
        case ResidualMode::v2v: {
          Var total = v2v_inject(tape, c2, skip);
          LifOut o2 = lif_step(tape, st2[i], total, leak(tape, site), spec_.lif);
          out = o2.spikes;
          carrier = total;
          break;
        }
        case ResidualMode::s2s: {
          LifOut o2 = lif_step(tape, st2[i], c2, leak(tape, site), spec_.lif);
          out = s2s_combine(tape, o2.spikes, skip);
          break;
        }
      }
      if (rec) rec->on_spikes(site, t, out.value);
      ++site;
      s = out;
    }
    Var g = ops::global_avg_pool(tape, s);
    Var f = fc_(tape, ps_, g);
    if (rec) rec->on_readout(t, f.value);
    acc = (t == 0) ? f : ops::add(tape, acc, f);
  }
  return readout(tape, acc, T);
}

Var Network::forward_vgg(Tape* tape, const std::vector<Tensor>& frames, bool train,
                         SpikeRecorder* rec) {
  int T = static_cast<int>(frames.size());
  std::vector<LifState> st(vgg_.size());
  Var acc;
  for (int t = 0; t < T; ++t) {
    Var s(frames[static_cast<size_t>(t)]);
    for (size_t i = 0; i < vgg_.size(); ++i) {
      VggLayer& l = vgg_[i];
      Var cur = norm_or_pass(tape, l.bn, l.conv(tape, ps_, s), t, train);
      LifOut o = lif_step(tape, st[i], cur, leak(tape, static_cast<int>(i)), spec_.lif);
      s = o.spikes;
      if (l.pool_after) s = ops::pool2d(tape, s, PoolKind::max, 2, 2);
      if (rec) rec->on_spikes(static_cast<int>(i), t, o.spikes.value);
    }
    Var g = ops::global_avg_pool(tape, s);
    Var f = fc_(tape, ps_, g);
    if (rec) rec->on_readout(t, f.value);
    acc = (t == 0) ? f : ops::add(tape, acc, f);
  }
  return readout(tape, acc, T);
}

}  // namespace spikegrid
