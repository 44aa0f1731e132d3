#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spikegrid/encode.hpp"
#include "spikegrid/network.hpp"

namespace spikegrid {

struct Sample {
  Tensor image;  // [C,H,W], values in [0,1] on ingest
  int label = 0;
};

struct Dataset {
  std::vector<Sample> items;
  int64_t classes = 0;
};

// CIFAR binary records: 1 label byte (or coarse+fine pair; the fine label is
// kept) followed by 3072 pixel bytes as R,G,B 32x32 planes. The label width
// is inferred from the file length.
Dataset read_cifar_binary(const std::string& path);

// One event per line, "t,x,y,p"; output sorted by t (stable).
std::vector<Event> read_event_csv(const std::string& path);

// Per-class oriented gratings plus Gaussian pixel noise, clipped to [0,1].
// Deterministic per seed; noise 0 makes all samples of a class identical.
Dataset synth_dataset(int64_t classes, int per_class, int64_t channels, int64_t size,
                      uint64_t seed, double noise);

struct CheckpointMeta {
  NetSpec spec;
  uint64_t seed = 0;
  int epoch = 0;
  std::string encode = "direct";
  std::string config_text;  // resolved run configuration, verbatim
};

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<Network> net;
  // Tensors outside the network (optimizer state), keyed by full name.
  std::vector<std::pair<std::string, Tensor>> extra;
};

// Layout: "SRNC1", u32 version, length-prefixed JSON meta, named tensors
// (f64 little-endian payloads), trailing CRC-32 of everything before it.
void save_checkpoint(const std::string& path, Network& net, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& extra = {});

LoadedCheckpoint load_checkpoint(const std::string& path);

// Load weights from `path` into a fresh network whose head is sized for
// new_classes; non-head tensors must match exactly. Head weights are freshly
// initialized from rng when the class count differs.
LoadedCheckpoint load_for_fine_tune(const std::string& path, int64_t new_classes, Rng& rng);

uint32_t crc32(const void* data, size_t n, uint32_t seed = 0);

// Minimal container for encoded tensors emitted by the CLI.
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

}  // namespace spikegrid
