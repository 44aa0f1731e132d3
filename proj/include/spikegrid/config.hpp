#pragma once

#include <string>
#include <vector>

#include "spikegrid/data.hpp"
#include "spikegrid/network.hpp"
#include "spikegrid/train.hpp"

namespace spikegrid {

// Everything one run needs: network topology, optimization schedule, and the
// data source. One seed drives initialization, shuffling, augmentation and
// encoding through derived substreams.
struct RunConfig {
  NetSpec net;
  TrainConfig train;
  std::string source = "synth";  // synth | cifar
  std::string train_path;
  std::string eval_path;
  int synth_train_per_class = 100;
  int synth_eval_per_class = 20;
  int64_t synth_size = 16;
  int64_t synth_channels = 3;
  double synth_noise = 0.25;
  uint64_t data_seed = 7;
};

// "section.key" -> value pairs in file order. Lines are `key = value`,
// `[section]` headers, blanks, and comments starting with # or ;. Repeated
// keys and anything else fail with a line-numbered ConfigError.
std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text);

// Named bundles of settings. "tiny-synth" is a complete small-scale run that
// trains in minutes on one core.
void apply_preset(RunConfig& cfg, const std::string& name);

// Applies one dotted key; unknown keys, bad values and out-of-range settings
// raise ConfigError naming the key.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// preset (optional) -> INI text (optional) -> overrides, later wins.
RunConfig build_config(const std::string& preset, const std::string& ini_text,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

// Canonical INI holding every setting; parsing it back reproduces the config.
std::string resolved_text(const RunConfig& cfg);

Dataset load_train_data(const RunConfig& cfg);
Dataset load_eval_data(const RunConfig& cfg);

}  // namespace spikegrid
