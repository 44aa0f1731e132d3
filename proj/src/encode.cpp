#include "spikegrid/encode.hpp"

#include <algorithm>

namespace spikegrid {

EncodeMode encode_mode_from_string(const std::string& s) {
  if (s == "direct") return EncodeMode::direct;
  if (s == "poisson") return EncodeMode::poisson;
  if (s == "event") return EncodeMode::event;
  throw ConfigError("unknown encode mode '" + s + "' (expected direct, poisson or event)");
}

const char* to_string(EncodeMode m) {
  switch (m) {
    case EncodeMode::direct: return "direct";
    case EncodeMode::poisson: return "poisson";
    case EncodeMode::event: return "event";
  }
  return "?";
}

namespace {

void check_chw(const Tensor& image, const char* what) {
  if (image.ndim() != 3) {
    throw DimensionError(std::string(what) + ": image must be [C,H,W], got " +
                         shape_str(image.shape()));
  }
}

}  // namespace

Tensor normalize(const Tensor& image, const std::vector<double>& mean,
                 const std::vector<double>& std) {
  check_chw(image, "normalize");
  int64_t C = image.dim(0);
  if (static_cast<int64_t>(mean.size()) != C || static_cast<int64_t>(std.size()) != C) {
    throw DimensionError("normalize: mean/std must have one entry per channel");
  }
  for (double s : std) {
    if (s <= 0.0) throw ContractError("normalize: std must be positive");
  }
  int64_t S = image.dim(1) * image.dim(2);
  std::vector<double> out(static_cast<size_t>(image.numel()));
  auto p = image.data();
  for (int64_t c = 0; c < C; ++c) {
    double m = mean[static_cast<size_t>(c)];
    double inv = 1.0 / std[static_cast<size_t>(c)];
    for (int64_t s = 0; s < S; ++s) {
      out[static_cast<size_t>(c * S + s)] =
          quantize((p[static_cast<size_t>(c * S + s)] - m) * inv, image.dtype());
    }
  }
  return Tensor::from(image.shape(), std::move(out), image.dtype());
}

Tensor hflip(const Tensor& image) {
  check_chw(image, "hflip");
  int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::vector<double> out(static_cast<size_t>(image.numel()));
  auto p = image.data();
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t y = 0; y < H; ++y) {
      const double* row = p.data() + (c * H + y) * W;
      double* dst = out.data() + (c * H + y) * W;
      for (int64_t x = 0; x < W; ++x) dst[x] = row[W - 1 - x];
    }
  }
  return Tensor::from(image.shape(), std::move(out), image.dtype());
}

Tensor augment(Rng& rng, const Tensor& image, int pad, int64_t crop_h, int64_t crop_w,
               double hflip_p) {
  check_chw(image, "augment");
  if (pad < 0) throw ContractError("augment: pad must be >= 0");
  int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  int64_t PH = H + 2 * pad, PW = W + 2 * pad;
  if (crop_h < 1 || crop_w < 1 || crop_h > PH || crop_w > PW) {
    throw ContractError("augment: crop window exceeds padded image");
  }
  int64_t oy = rng.below(PH - crop_h + 1);
  int64_t ox = rng.below(PW - crop_w + 1);
  std::vector<double> out(static_cast<size_t>(C * crop_h * crop_w), 0.0);
  auto p = image.data();
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t y = 0; y < crop_h; ++y) {
      int64_t sy = oy + y - pad;
      if (sy < 0 || sy >= H) continue;
      for (int64_t x = 0; x < crop_w; ++x) {
        int64_t sx = ox + x - pad;
        if (sx < 0 || sx >= W) continue;
        out[static_cast<size_t>((c * crop_h + y) * crop_w + x)] =
            p[static_cast<size_t>((c * H + sy) * W + sx)];
      }
    }
  }
  Tensor cropped = Tensor::from({C, crop_h, crop_w}, std::move(out), image.dtype());
  if (rng.bernoulli(hflip_p)) cropped = hflip(cropped);
  return cropped;
}

std::vector<Tensor> direct_encode(const Tensor& frame, int T) {
  if (T < 1) throw ContractError("direct_encode: T must be >= 1");
  return std::vector<Tensor>(static_cast<size_t>(T), frame);
}

Tensor poisson_encode(Rng& rng, const Tensor& image, int T) {
  check_chw(image, "poisson_encode");
  if (T < 1) throw ContractError("poisson_encode: T must be >= 1");
  auto p = image.data();
  for (double v : p) {
    if (v < 0.0 || v > 1.0) {
      throw ContractError("poisson_encode: intensities must lie in [0,1]");
    }
  }
  int64_t n = image.numel();
  std::vector<double> out(static_cast<size_t>(T * n));
  for (int t = 0; t < T; ++t) {
    double* dst = out.data() + static_cast<int64_t>(t) * n;
    for (int64_t i = 0; i < n; ++i) {
      dst[i] = rng.bernoulli(p[static_cast<size_t>(i)]) ? 1.0 : 0.0;
    }
  }
  Shape shape{T};
  for (int64_t d : image.shape()) shape.push_back(d);
  return Tensor::from(shape, std::move(out), image.dtype());
}

Tensor events_to_frames(const std::vector<Event>& events, int T, int64_t H, int64_t W,
                        bool binarize) {
  if (events.empty()) throw ContractError("events_to_frames: empty event stream");
  if (T < 1) throw ContractError("events_to_frames: T must be >= 1");
  int64_t t_first = events.front().t;
  int64_t t_last = events.front().t;
  for (const Event& e : events) {
    t_first = std::min(t_first, e.t);
    t_last = std::max(t_last, e.t);
  }
  double span = static_cast<double>(t_last - t_first);
  std::vector<double> out(static_cast<size_t>(T) * 2 * static_cast<size_t>(H * W), 0.0);
  for (const Event& e : events) {
    if (e.x < 0 || e.x >= W || e.y < 0 || e.y >= H) {
      throw ContractError("events_to_frames: event at (" + std::to_string(e.x) + "," +
                          std::to_string(e.y) + ") outside " + std::to_string(W) + "x" +
                          std::to_string(H));
    }
    if (e.p != 0 && e.p != 1) {
      throw ContractError("events_to_frames: polarity must be 0 or 1");
    }
    int64_t w = 0;
    if (span > 0.0) {
      w = static_cast<int64_t>(static_cast<double>(e.t - t_first) * T / span);
      w = std::min<int64_t>(w, T - 1);
    }
    out[static_cast<size_t>(((w * 2 + e.p) * H + e.y) * W + e.x)] += 1.0;
  }
  if (binarize) {
    for (double& v : out) v = v > 0.0 ? 1.0 : 0.0;
  }
  return Tensor::from({T, 2, H, W}, std::move(out));
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw ContractError("stack: nothing to stack");
  const Tensor& first = items[0];
  for (const Tensor& t : items) {
    if (!same_shape(t.shape(), first.shape())) {
      throw DimensionError("stack: member shapes differ");
    }
  }
  int64_t n = first.numel();
  std::vector<double> out(static_cast<size_t>(n) * items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    auto src = items[i].data();
    std::copy(src.begin(), src.end(), out.begin() + static_cast<int64_t>(i) * n);
  }
  Shape shape{static_cast<int64_t>(items.size())};
  for (int64_t d : first.shape()) shape.push_back(d);
  return Tensor::from(shape, std::move(out), first.dtype());
}

Tensor take0(const Tensor& t, int64_t i) {
  if (t.ndim() < 2) throw DimensionError("take0: need at least 2 dimensions");
  if (i < 0 || i >= t.dim(0)) throw ContractError("take0: index out of range");
  Shape shape(t.shape().begin() + 1, t.shape().end());
  int64_t n = shape_numel(shape);
  auto src = t.data();
  std::vector<double> out(src.begin() + i * n, src.begin() + (i + 1) * n);
  return Tensor::from(shape, std::move(out), t.dtype());
}

std::vector<Tensor> encode_batch(uint64_t seed, const std::vector<Tensor>& images,
                                 EncodeMode mode, int T, DType dt) {
  if (images.empty()) throw ContractError("encode_batch: empty batch");
  if (mode == EncodeMode::direct) {
    Tensor frame = stack(images).astype(dt);
    return direct_encode(frame, T);
  }
  if (mode == EncodeMode::poisson) {
    std::vector<Tensor> seqs;
    seqs.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
      Rng rng = Rng::derive(seed, 0x70495350ull, i);
      seqs.push_back(poisson_encode(rng, images[i], T));
    }
    return stack_sequences(seqs, dt);
  }
  throw ContractError("encode_batch: event streams are framed per sample, not here");
}

std::vector<Tensor> stack_sequences(const std::vector<Tensor>& seqs, DType dt) {
  if (seqs.empty()) throw ContractError("stack_sequences: empty batch");
  int T = static_cast<int>(seqs[0].dim(0));
  std::vector<Tensor> frames;
  frames.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    std::vector<Tensor> rows;
    rows.reserve(seqs.size());
    for (const Tensor& s : seqs) {
      if (s.dim(0) != T) throw DimensionError("stack_sequences: sequence lengths differ");
      rows.push_back(take0(s, t));
    }
    frames.push_back(stack(rows).astype(dt));
  }
  return frames;
}

}  // namespace spikegrid
