#pragma once

#include <string>
#include <vector>

#include "spikegrid/common.hpp"
#include "spikegrid/tensor.hpp"

namespace spikegrid {

enum class EncodeMode { direct, poisson, event };

EncodeMode encode_mode_from_string(const std::string& s);
const char* to_string(EncodeMode m);

struct Event {
  int64_t t = 0;  // microseconds, non-negative
  int x = 0;
  int y = 0;
  int p = 0;  // polarity, 0 or 1
};

// (x - mean[c]) / std[c] per channel; image is [C,H,W].
Tensor normalize(const Tensor& image, const std::vector<double>& mean,
                 const std::vector<double>& std);

Tensor hflip(const Tensor& image);

// Zero-pad by `pad`, crop a (crop_h x crop_w) window at a uniform offset,
// then flip horizontally with probability hflip_p.
Tensor augment(Rng& rng, const Tensor& image, int pad, int64_t crop_h, int64_t crop_w,
               double hflip_p);

// The same frame presented at every step. Storage is shared, not copied.
std::vector<Tensor> direct_encode(const Tensor& frame, int T);

// Independent Bernoulli(intensity) per pixel per step; image values must lie
// in [0,1]. Returns [T,C,H,W] of {0,1}.
Tensor poisson_encode(Rng& rng, const Tensor& image, int T);

// Bucket events into T equal-duration windows over [t_first, t_last]; output
// [T,2,H,W] counts (channel = polarity), optionally clamped to {0,1}.
Tensor events_to_frames(const std::vector<Event>& events, int T, int64_t H, int64_t W,
                        bool binarize = false);

// Stack k same-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& items);

// Row i of the leading axis, copied out.
Tensor take0(const Tensor& t, int64_t i);

// Per-timestep batch inputs for image samples: T tensors of [N,C,H,W].
std::vector<Tensor> encode_batch(uint64_t seed, const std::vector<Tensor>& images,
                                 EncodeMode mode, int T, DType dt);

// k sequences [T,C,H,W] -> T batched frames [k,C,H,W].
std::vector<Tensor> stack_sequences(const std::vector<Tensor>& seqs, DType dt);

}  // namespace spikegrid
