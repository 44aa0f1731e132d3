#include "spikegrid/config.hpp"

#include <cstdio>
#include <set>

namespace spikegrid {

namespace {

constexpr uint64_t kTagTrainSet = 0x54524e53ull;
constexpr uint64_t kTagEvalSet = 0x45564c53ull;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("bad value '" + value + "' for " + key + ": expected " + expected);
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    bad_value(key, value, "a number");
  }
}

int64_t parse_i64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    bad_value(key, value, "an integer");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || (!value.empty() && value[0] == '-')) {
      throw std::invalid_argument("trailing");
    }
    return v;
  } catch (const std::exception&) {
    bad_value(key, value, "a non-negative integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  if (trim(value).empty()) return out;
  size_t pos = 0;
  while (pos <= value.size()) {
    size_t end = value.find(',', pos);
    if (end == std::string::npos) end = value.size();
    out.push_back(parse_f64(key, trim(value.substr(pos, end - pos))));
    pos = end + 1;
    if (end == value.size()) break;
  }
  return out;
}

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_f64(v[i]);
  }
  return out;
}

const char* leak_mode_str(LeakMode m) {
  switch (m) {
    case LeakMode::fixed: return "fixed";
    case LeakMode::plif_shared: return "plif_shared";
    default: return "plif_layer";
  }
}

LeakMode leak_mode_parse(const std::string& key, const std::string& v) {
  if (v == "fixed") return LeakMode::fixed;
  if (v == "plif_shared") return LeakMode::plif_shared;
  if (v == "plif_layer") return LeakMode::plif_layer;
  bad_value(key, v, "fixed, plif_shared or plif_layer");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::string section;
  size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    bool last = end == text.size();
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') {
      if (last) break;
      continue;
    }
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      }
      if (last) break;
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");
    }
    std::string full = section + "." + key;
    if (!seen.insert(full).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
    }
    out.emplace_back(full, value);
    if (last) break;
  }
  return out;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "network.arch") {
    cfg.net.arch = arch_from_string(value);
  } else if (key == "network.input_channels") {
    cfg.net.input_channels = parse_i64(key, value);
  } else if (key == "network.input_size") {
    cfg.net.input_size = parse_i64(key, value);
  } else if (key == "network.base_width") {
    cfg.net.base_width = parse_i64(key, value);
  } else if (key == "network.blocks_per_stage") {
    cfg.net.blocks_per_stage = static_cast<int>(parse_i64(key, value));
  } else if (key == "network.classes") {
    cfg.net.classes = parse_i64(key, value);
  } else if (key == "network.timesteps") {
    cfg.net.timesteps = static_cast<int>(parse_i64(key, value));
  } else if (key == "network.residual") {
    cfg.net.residual = residual_mode_from_string(value);
  } else if (key == "network.leak_mode") {
    cfg.net.leak_mode = leak_mode_parse(key, value);
  } else if (key == "network.leak") {
    cfg.net.leak_init = parse_f64(key, value);
  } else if (key == "network.threshold") {
    cfg.net.lif.u_th = parse_f64(key, value);
  } else if (key == "network.alpha") {
    cfg.net.lif.alpha = parse_f64(key, value);
  } else if (key == "network.surrogate_center") {
    if (value == "threshold") {
      cfg.net.lif.center_at_threshold = true;
    } else if (value == "origin") {
      cfg.net.lif.center_at_threshold = false;
    } else {
      bad_value(key, value, "threshold or origin");
    }
  } else if (key == "network.soft_spikes") {
    cfg.net.lif.soft_forward = parse_bool(key, value);
  } else if (key == "network.norm") {
    cfg.net.norm = norm_mode_from_string(value);
  } else if (key == "network.learn_beta") {
    cfg.net.learn_beta = parse_bool(key, value);
  } else if (key == "network.fc_bias") {
    cfg.net.fc_bias = parse_bool(key, value);
  } else if (key == "network.boosting") {
    cfg.net.boosting = parse_bool(key, value);
  } else if (key == "network.boost_group") {
    cfg.net.boost_group = static_cast<int>(parse_i64(key, value));
  } else if (key == "network.precision") {
    if (value == "f64") {
      cfg.net.dtype = DType::f64;
    } else if (value == "f32") {
      cfg.net.dtype = DType::f32;
    } else {
      bad_value(key, value, "f64 or f32");
    }
  } else if (key == "train.lr") {
    cfg.train.lr = parse_f64(key, value);
  } else if (key == "train.batch") {
    cfg.train.batch = static_cast<int>(parse_i64(key, value));
  } else if (key == "train.epochs") {
    cfg.train.epochs = static_cast<int>(parse_i64(key, value));
  } else if (key == "train.momentum") {
    cfg.train.momentum = parse_f64(key, value);
  } else if (key == "train.weight_decay") {
    cfg.train.weight_decay = parse_f64(key, value);
  } else if (key == "train.milestones") {
    cfg.train.milestones = parse_list(key, value);
  } else if (key == "train.clip_norm") {
    cfg.train.clip_norm = parse_f64(key, value);
  } else if (key == "train.seed") {
    cfg.train.seed = parse_u64(key, value);
  } else if (key == "train.encode") {
    cfg.train.encode = encode_mode_from_string(value);
  } else if (key == "train.augment") {
    cfg.train.augment = parse_bool(key, value);
  } else if (key == "train.pad") {
    cfg.train.pad = static_cast<int>(parse_i64(key, value));
  } else if (key == "train.hflip_p") {
    cfg.train.hflip_p = parse_f64(key, value);
  } else if (key == "train.eval_every") {
    cfg.train.eval_every = static_cast<int>(parse_i64(key, value));
  } else if (key == "train.target_train_acc") {
    cfg.train.target_train_acc = parse_f64(key, value);
  } else if (key == "train.target_eval_acc") {
    cfg.train.target_eval_acc = parse_f64(key, value);
  } else if (key == "data.source") {
    if (value == "synth" || value == "cifar") {
      cfg.source = value;
    } else if (value == "event") {
      throw ConfigError(
          "data.source: event streams are framed per record; convert them with the encode "
          "command and feed image sources here");
    } else {
      bad_value(key, value, "synth or cifar");
    }
  } else if (key == "data.train_path") {
    cfg.train_path = value;
  } else if (key == "data.eval_path") {
    cfg.eval_path = value;
  } else if (key == "data.synth_train_per_class") {
    cfg.synth_train_per_class = static_cast<int>(parse_i64(key, value));
  } else if (key == "data.synth_eval_per_class") {
    cfg.synth_eval_per_class = static_cast<int>(parse_i64(key, value));
  } else if (key == "data.synth_size") {
    cfg.synth_size = parse_i64(key, value);
  } else if (key == "data.synth_channels") {
    cfg.synth_channels = parse_i64(key, value);
  } else if (key == "data.synth_noise") {
    cfg.synth_noise = parse_f64(key, value);
  } else if (key == "data.seed") {
    cfg.data_seed = parse_u64(key, value);
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "tiny-synth") {
    cfg = RunConfig{};
    cfg.net.arch = Arch::sresnet;
    cfg.net.input_channels = 3;
    cfg.net.input_size = 16;
    cfg.net.base_width = 8;
    cfg.net.blocks_per_stage = 1;
    cfg.net.classes = 10;
    cfg.net.timesteps = 4;
    cfg.net.residual = ResidualMode::s2s;
    cfg.net.norm = NormMode::per_step;
    cfg.train.lr = 0.0268;
    cfg.train.batch = 21;
    cfg.train.epochs = 50;
    cfg.train.eval_every = 1;
    cfg.train.target_train_acc = 0.95;
    cfg.train.target_eval_acc = 0.90;
    cfg.train.encode = EncodeMode::direct;
    cfg.train.augment = false;
    cfg.train.seed = 1;
    cfg.source = "synth";
    cfg.synth_train_per_class = 100;
    cfg.synth_eval_per_class = 20;
    cfg.synth_size = 16;
    cfg.synth_channels = 3;
    cfg.synth_noise = 0.25;
    cfg.data_seed = 7;
  } else if (name == "cifar10-sresnet") {
    cfg = RunConfig{};
    cfg.net.arch = Arch::sresnet;
    cfg.net.input_channels = 3;
    cfg.net.input_size = 32;
    cfg.net.base_width = 16;
    cfg.net.blocks_per_stage = 6;
    cfg.net.classes = 10;
    cfg.net.timesteps = 50;
    cfg.net.residual = ResidualMode::v2v;
    cfg.train.epochs = 70;
    cfg.train.augment = true;
    cfg.source = "cifar";
  } else if (name == "cifar100-sresnet") {
    apply_preset(cfg, "cifar10-sresnet");
    cfg.net.classes = 100;
    cfg.net.base_width = 32;
    cfg.net.boosting = true;
    cfg.net.boost_group = 10;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
}

RunConfig build_config(const std::string& preset, const std::string& ini_text,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!preset.empty()) apply_preset(cfg, preset);
  for (const auto& [k, v] : parse_ini(ini_text)) apply_kv(cfg, k, v);
  for (const auto& [k, v] : overrides) apply_kv(cfg, k, v);
  return cfg;
}

std::string resolved_text(const RunConfig& cfg) {
  std::string s;
  s += "[network]\n";
  s += "arch = " + std::string(to_string(cfg.net.arch)) + "\n";
  s += "input_channels = " + std::to_string(cfg.net.input_channels) + "\n";
  s += "input_size = " + std::to_string(cfg.net.input_size) + "\n";
  s += "base_width = " + std::to_string(cfg.net.base_width) + "\n";
  s += "blocks_per_stage = " + std::to_string(cfg.net.blocks_per_stage) + "\n";
  s += "classes = " + std::to_string(cfg.net.classes) + "\n";
  s += "timesteps = " + std::to_string(cfg.net.timesteps) + "\n";
  s += "residual = " + std::string(to_string(cfg.net.residual)) + "\n";
  s += "leak_mode = " + std::string(leak_mode_str(cfg.net.leak_mode)) + "\n";
  s += "leak = " + fmt_f64(cfg.net.leak_init) + "\n";
  s += "threshold = " + fmt_f64(cfg.net.lif.u_th) + "\n";
  s += "alpha = " + fmt_f64(cfg.net.lif.alpha) + "\n";
  s += "surrogate_center = " +
       std::string(cfg.net.lif.center_at_threshold ? "threshold" : "origin") + "\n";
  s += "soft_spikes = " + std::string(cfg.net.lif.soft_forward ? "true" : "false") + "\n";
  s += "norm = " + std::string(to_string(cfg.net.norm)) + "\n";
  s += "learn_beta = " + std::string(cfg.net.learn_beta ? "true" : "false") + "\n";
  s += "fc_bias = " + std::string(cfg.net.fc_bias ? "true" : "false") + "\n";
  s += "boosting = " + std::string(cfg.net.boosting ? "true" : "false") + "\n";
  s += "boost_group = " + std::to_string(cfg.net.boost_group) + "\n";
  s += "precision = " + std::string(cfg.net.dtype == DType::f32 ? "f32" : "f64") + "\n";
  s += "\n[train]\n";
  s += "lr = " + fmt_f64(cfg.train.lr) + "\n";
  s += "batch = " + std::to_string(cfg.train.batch) + "\n";
  s += "epochs = " + std::to_string(cfg.train.epochs) + "\n";
  s += "momentum = " + fmt_f64(cfg.train.momentum) + "\n";
  s += "weight_decay = " + fmt_f64(cfg.train.weight_decay) + "\n";
  s += "milestones = " + fmt_list(cfg.train.milestones) + "\n";
  s += "clip_norm = " + fmt_f64(cfg.train.clip_norm) + "\n";
  s += "seed = " + std::to_string(cfg.train.seed) + "\n";
  s += "encode = " + std::string(to_string(cfg.train.encode)) + "\n";
  s += "augment = " + std::string(cfg.train.augment ? "true" : "false") + "\n";
  s += "pad = " + std::to_string(cfg.train.pad) + "\n";
  s += "hflip_p = " + fmt_f64(cfg.train.hflip_p) + "\n";
  s += "eval_every = " + std::to_string(cfg.train.eval_every) + "\n";
  s += "target_train_acc = " + fmt_f64(cfg.train.target_train_acc) + "\n";
  s += "target_eval_acc = " + fmt_f64(cfg.train.target_eval_acc) + "\n";
  s += "\n[data]\n";
  s += "source = " + cfg.source + "\n";
  s += "train_path = " + cfg.train_path + "\n";
  s += "eval_path = " + cfg.eval_path + "\n";
  s += "synth_train_per_class = " + std::to_string(cfg.synth_train_per_class) + "\n";
  s += "synth_eval_per_class = " + std::to_string(cfg.synth_eval_per_class) + "\n";
  s += "synth_size = " + std::to_string(cfg.synth_size) + "\n";
  s += "synth_channels = " + std::to_string(cfg.synth_channels) + "\n";
  s += "synth_noise = " + fmt_f64(cfg.synth_noise) + "\n";
  s += "seed = " + std::to_string(cfg.data_seed) + "\n";
  return s;
}

namespace {

Dataset load_split(const RunConfig& cfg, bool train_split) {
  if (cfg.source == "synth") {
    int per_class = train_split ? cfg.synth_train_per_class : cfg.synth_eval_per_class;
    uint64_t seed = derive_seed(cfg.data_seed, train_split ? kTagTrainSet : kTagEvalSet);
    return synth_dataset(cfg.net.classes, per_class, cfg.synth_channels, cfg.synth_size, seed,
                         cfg.synth_noise);
  }
  const std::string& path = train_split ? cfg.train_path : cfg.eval_path;
  if (path.empty()) {
    throw ConfigError(std::string("data.") + (train_split ? "train_path" : "eval_path") +
                      " is required when data.source = cifar");
  }
  Dataset ds = read_cifar_binary(path);
  if (ds.classes != cfg.net.classes) {
    throw ConfigError("'" + path + "' holds " + std::to_string(ds.classes) +
                      " classes but network.classes = " + std::to_string(cfg.net.classes));
  }
  return ds;
}

}  // namespace

Dataset load_train_data(const RunConfig& cfg) { return load_split(cfg, true); }

Dataset load_eval_data(const RunConfig& cfg) { return load_split(cfg, false); }

}  // namespace spikegrid
