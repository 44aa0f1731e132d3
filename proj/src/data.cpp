#include "spikegrid/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace spikegrid {

namespace {

using nlohmann::json;

constexpr char kMagic[5] = {'S', 'R', 'N', 'C', '1'};
constexpr uint32_t kVersion = 1;
constexpr char kTensorMagic[4] = {'S', 'G', 'T', '1'};

const std::array<uint32_t, 256>& crc_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;
  void need(size_t n, const char* what) const {
    if (pos + n > buf.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64(const char* what) {
    uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw ContractError("tensor name too long");
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.append(name);
  put_u8(out, t.dtype() == DType::f32 ? 1 : 0);
  put_u8(out, static_cast<uint8_t>(t.ndim()));
  for (int64_t d : t.shape()) put_u64(out, static_cast<uint64_t>(d));
  for (double v : t.data()) put_f64(out, v);
}

std::pair<std::string, Tensor> get_tensor(Cursor& c) {
  uint32_t name_len = c.u32("tensor name length");
  std::string name = c.bytes(name_len, "tensor name");
  uint8_t dt = c.u8("tensor dtype");
  if (dt > 1) throw FormatError("tensor '" + name + "' has unknown dtype code");
  uint8_t nd = c.u8("tensor rank");
  Shape shape;
  int64_t numel = 1;
  for (uint8_t i = 0; i < nd; ++i) {
    int64_t d = static_cast<int64_t>(c.u64("tensor dims"));
    if (d < 1 || d > (1ll << 40)) throw FormatError("tensor '" + name + "' has bad dimension");
    shape.push_back(d);
    numel *= d;
  }
  std::vector<double> v(static_cast<size_t>(numel));
  for (int64_t i = 0; i < numel; ++i) v[static_cast<size_t>(i)] = c.f64("tensor data");
  return {name, Tensor::from(shape, std::move(v), dt == 1 ? DType::f32 : DType::f64)};
}

json spec_to_json(const NetSpec& s) {
  json j;
  j["arch"] = to_string(s.arch);
  j["input_channels"] = s.input_channels;
  j["input_size"] = s.input_size;
  j["base_width"] = s.base_width;
  j["blocks_per_stage"] = s.blocks_per_stage;
  j["classes"] = s.classes;
  j["timesteps"] = s.timesteps;
  j["residual"] = to_string(s.residual);
  j["leak_mode"] = s.leak_mode == LeakMode::fixed
                       ? "fixed"
                       : (s.leak_mode == LeakMode::plif_shared ? "plif_shared" : "plif_layer");
  j["leak"] = s.leak_init;
  j["threshold"] = s.lif.u_th;
  j["alpha"] = s.lif.alpha;
  j["surrogate_center"] = s.lif.center_at_threshold ? "threshold" : "origin";
  j["norm"] = to_string(s.norm);
  j["learn_beta"] = s.learn_beta;
  j["fc_bias"] = s.fc_bias;
  j["boosting"] = s.boosting;
  j["boost_group"] = s.boost_group;
  j["precision"] = s.dtype == DType::f32 ? "f32" : "f64";
  return j;
}

NetSpec spec_from_json(const json& j) {
  NetSpec s;
  s.arch = arch_from_string(j.at("arch").get<std::string>());
  s.input_channels = j.at("input_channels").get<int64_t>();
  s.input_size = j.at("input_size").get<int64_t>();
  s.base_width = j.at("base_width").get<int64_t>();
  s.blocks_per_stage = j.at("blocks_per_stage").get<int>();
  s.classes = j.at("classes").get<int64_t>();
  s.timesteps = j.at("timesteps").get<int>();
  s.residual = residual_mode_from_string(j.at("residual").get<std::string>());
  std::string lm = j.at("leak_mode").get<std::string>();
  s.leak_mode = lm == "fixed" ? LeakMode::fixed
                              : (lm == "plif_shared" ? LeakMode::plif_shared : LeakMode::plif_layer);
  s.leak_init = j.at("leak").get<double>();
  s.lif.u_th = j.at("threshold").get<double>();
  s.lif.alpha = j.at("alpha").get<double>();
  s.lif.center_at_threshold = j.at("surrogate_center").get<std::string>() == "threshold";
  s.norm = norm_mode_from_string(j.at("norm").get<std::string>());
  s.learn_beta = j.at("learn_beta").get<bool>();
  s.fc_bias = j.at("fc_bias").get<bool>();
  s.boosting = j.at("boosting").get<bool>();
  s.boost_group = j.at("boost_group").get<int>();
  s.dtype = j.at("precision").get<std::string>() == "f32" ? DType::f32 : DType::f64;
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failure on '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out.good()) throw IoError("write failure on '" + path + "'");
}

// The two stat tensors a norm layer owns for one timestep slot.
std::string stat_name(const std::string& layer, int slot, bool mean) {
  return layer + ".t" + std::to_string(slot) + (mean ? ".running_mean" : ".running_var");
}

}  // namespace

uint32_t crc32(const void* data, size_t n, uint32_t seed) {
  const auto& table = crc_table();
  uint32_t c = seed ^ 0xffffffffu;
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

Dataset read_cifar_binary(const std::string& path) {
  std::string bytes = read_file(path);
  Dataset ds;
  if (bytes.empty()) {
    return ds;
  }
  size_t n = bytes.size();
  bool ten = n % 3073 == 0;
  bool hundred = n % 3074 == 0;
  if (ten && hundred) {
    throw FormatError("'" + path + "': length fits both 1- and 2-byte label records");
  }
  if (!ten && !hundred) {
    throw FormatError("'" + path + "': length " + std::to_string(n) +
                      " is not a multiple of the record size");
  }
  size_t record = ten ? 3073 : 3074;
  int label_bytes = ten ? 1 : 2;
  ds.classes = ten ? 10 : 100;
  const auto* p = reinterpret_cast<const uint8_t*>(bytes.data());
  for (size_t off = 0; off < n; off += record) {
    int label = label_bytes == 1 ? p[off] : p[off + 1];  // fine label of the pair
    if (label >= ds.classes) {
      throw FormatError("'" + path + "': label " + std::to_string(label) + " out of range");
    }
    std::vector<double> img(3072);
    for (size_t i = 0; i < 3072; ++i) {
      img[i] = static_cast<double>(p[off + static_cast<size_t>(label_bytes) + i]) / 255.0;
    }
    ds.items.push_back(Sample{Tensor::from({3, 32, 32}, std::move(img)), label});
  }
  return ds;
}

std::vector<Event> read_event_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<Event> events;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    long long vals[4];
    size_t pos = 0;
    for (int f = 0; f < 4; ++f) {
      size_t end = f < 3 ? line.find(',', pos) : line.size();
      if (end == std::string::npos) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": expected 't,x,y,p'");
      }
      std::string field = line.substr(pos, end - pos);
      try {
        size_t used = 0;
        vals[f] = std::stoll(field, &used);
        if (used != field.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad integer '" + field + "'");
      }
      pos = end + 1;
    }
    if (vals[0] < 0) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": negative timestamp");
    }
    if (vals[1] < 0 || vals[2] < 0) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": negative coordinate");
    }
    if (vals[3] != 0 && vals[3] != 1) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": polarity must be 0 or 1");
    }
    events.push_back(Event{vals[0], static_cast<int>(vals[1]), static_cast<int>(vals[2]),
                           static_cast<int>(vals[3])});
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return events;
}

Dataset synth_dataset(int64_t classes, int per_class, int64_t channels, int64_t size,
                      uint64_t seed, double noise) {
  if (classes < 2) throw ContractError("synth_dataset: need at least 2 classes");
  if (per_class < 1) throw ContractError("synth_dataset: need at least 1 sample per class");
  if (channels < 1 || size < 4) throw ContractError("synth_dataset: shape too small");
  if (noise < 0.0) throw ContractError("synth_dataset: noise must be >= 0");
  Dataset ds;
  ds.classes = classes;
  double period = static_cast<double>(size) / 4.0;
  for (int64_t k = 0; k < classes; ++k) {
    double theta = M_PI * static_cast<double>(k) / static_cast<double>(classes);
    double ct = std::cos(theta), st = std::sin(theta);
    std::vector<double> base(static_cast<size_t>(channels * size * size));
    for (int64_t c = 0; c < channels; ++c) {
      double phase = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(channels) / 3.0;
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          double u = (static_cast<double>(x) + 0.5) * ct + (static_cast<double>(y) + 0.5) * st;
          base[static_cast<size_t>((c * size + y) * size + x)] =
              0.5 + 0.45 * std::sin(2.0 * M_PI * u / period + phase);
        }
      }
    }
    for (int i = 0; i < per_class; ++i) {
      Rng rng = Rng::derive(seed, 0x53594e54ull, static_cast<uint64_t>(k),
                            static_cast<uint64_t>(i));
      std::vector<double> img = base;
      if (noise > 0.0) {
        for (double& v : img) v = std::clamp(v + noise * rng.normal(), 0.0, 1.0);
      }
      ds.items.push_back(
          Sample{Tensor::from({channels, size, size}, std::move(img)), static_cast<int>(k)});
    }
  }
  return ds;
}

void save_checkpoint(const std::string& path, Network& net, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& extra) {
  std::string buf(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  json j;
  j["spec"] = spec_to_json(meta.spec);
  j["seed"] = meta.seed;
  j["epoch"] = meta.epoch;
  j["encode"] = meta.encode;
  j["config"] = meta.config_text;
  std::string m = j.dump();
  put_u64(buf, m.size());
  buf.append(m);

  std::vector<std::pair<std::string, Tensor>> tensors;
  for (const Param& p : net.params().items()) tensors.emplace_back(p.name, p.value);
  for (TemporalBatchNorm* bn : net.norm_layers()) {
    for (int s = 0; s < bn->slots(); ++s) {
      tensors.emplace_back(stat_name(bn->name(), s, true), bn->running_mean(s));
      tensors.emplace_back(stat_name(bn->name(), s, false), bn->running_var(s));
    }
  }
  for (const auto& [name, t] : extra) tensors.emplace_back(name, t);

  put_u32(buf, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) put_tensor(buf, name, t);
  put_u32(buf, crc32(buf.data(), buf.size()));
  write_file(path, buf);
}

namespace {

LoadedCheckpoint load_impl(const std::string& path, int64_t override_classes, Rng* head_rng) {
  std::string buf = read_file(path);
  if (buf.size() < sizeof(kMagic) + 8) throw FormatError("'" + path + "': not a checkpoint");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("'" + path + "': bad magic, not a checkpoint");
  }
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) {
    stored_crc |= static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 4 + static_cast<size_t>(i)]))
                  << (8 * i);
  }
  if (crc32(buf.data(), buf.size() - 4) != stored_crc) {
    throw FormatError("'" + path + "': checksum mismatch, file is corrupt");
  }
  Cursor c{buf, sizeof(kMagic)};
  uint32_t version = c.u32("version");
  if (version != kVersion) {
    throw FormatError("'" + path + "': unsupported checkpoint version " +
                      std::to_string(version));
  }
  uint64_t meta_len = c.u64("meta length");
  std::string meta_str = c.bytes(meta_len, "meta");
  json j;
  try {
    j = json::parse(meta_str);
  } catch (const std::exception& e) {
    throw FormatError("'" + path + "': bad meta block: " + e.what());
  }
  LoadedCheckpoint out;
  out.meta.spec = spec_from_json(j.at("spec"));
  out.meta.seed = j.at("seed").get<uint64_t>();
  out.meta.epoch = j.at("epoch").get<int>();
  out.meta.encode = j.at("encode").get<std::string>();
  out.meta.config_text = j.at("config").get<std::string>();

  std::map<std::string, Tensor> stored;
  uint32_t count = c.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, t] = get_tensor(c);
    if (!stored.emplace(name, t).second) {
      throw FormatError("'" + path + "': tensor '" + name + "' appears twice");
    }
  }

  NetSpec build_spec = out.meta.spec;
  bool head_swap = override_classes > 0 && override_classes != build_spec.classes;
  if (override_classes > 0) build_spec.classes = override_classes;
  if (head_rng) {
    out.net = std::make_unique<Network>(build_spec, *head_rng);
  } else {
    Rng init_rng(out.meta.seed);
    out.net = std::make_unique<Network>(build_spec, init_rng);
  }

  std::vector<std::string> missing, mismatched;
  std::set<std::string> used;
  for (Param& p : out.net->params().items()) {
    bool is_head = p.name == "head.w" || p.name == "head.b";
    if (head_swap && is_head) continue;  // keep the fresh initialization
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      missing.push_back(p.name);
      continue;
    }
    used.insert(p.name);
    if (!same_shape(it->second.shape(), p.value.shape())) {
      mismatched.push_back(p.name + " (stored " + shape_str(it->second.shape()) + ", built " +
                           shape_str(p.value.shape()) + ")");
      continue;
    }
    p.value = it->second.astype(p.value.dtype());
  }
  for (TemporalBatchNorm* bn : out.net->norm_layers()) {
    for (int s = 0; s < bn->slots(); ++s) {
      for (bool mean : {true, false}) {
        std::string name = stat_name(bn->name(), s, mean);
        auto it = stored.find(name);
        if (it == stored.end()) {
          missing.push_back(name);
          continue;
        }
        used.insert(name);
        Tensor& slot = mean ? bn->running_mean(s) : bn->running_var(s);
        if (!same_shape(it->second.shape(), slot.shape())) {
          mismatched.push_back(name);
          continue;
        }
        slot = it->second.astype(slot.dtype());
      }
    }
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::string msg = "'" + path + "': checkpoint does not match the network topology.";
    if (!missing.empty()) {
      msg += " missing:";
      for (const auto& n : missing) msg += " " + n;
      msg += ".";
    }
    if (!mismatched.empty()) {
      msg += " shape mismatch:";
      for (const auto& n : mismatched) msg += " " + n;
      msg += ".";
    }
    throw FormatError(msg);
  }
  auto refers_to_head = [](const std::string& name) {
    for (const char* hp : {"head.w", "head.b"}) {
      if (name == hp) return true;
      std::string suffix = std::string(".") + hp;
      if (name.size() > suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return true;
      }
    }
    return false;
  };
  for (auto& [name, t] : stored) {
    if (!used.count(name)) {
      if (head_swap && refers_to_head(name)) continue;  // stale state for the replaced head
      out.extra.emplace_back(name, t);
    }
  }
  return out;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) { return load_impl(path, 0, nullptr); }

LoadedCheckpoint load_for_fine_tune(const std::string& path, int64_t new_classes, Rng& rng) {
  if (new_classes < 2) throw ContractError("fine-tune: new_classes must be >= 2");
  return load_impl(path, new_classes, &rng);
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::string buf(kTensorMagic, sizeof(kTensorMagic));
  put_u8(buf, t.dtype() == DType::f32 ? 1 : 0);
  put_u8(buf, static_cast<uint8_t>(t.ndim()));
  for (int64_t d : t.shape()) put_u64(buf, static_cast<uint64_t>(d));
  for (double v : t.data()) put_f64(buf, v);
  put_u32(buf, crc32(buf.data(), buf.size()));
  write_file(path, buf);
}

Tensor read_tensor_file(const std::string& path) {
  std::string buf = read_file(path);
  if (buf.size() < sizeof(kTensorMagic) + 6 ||
      std::memcmp(buf.data(), kTensorMagic, sizeof(kTensorMagic)) != 0) {
    throw FormatError("'" + path + "': not a tensor file");
  }
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) {
    stored_crc |= static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 4 + static_cast<size_t>(i)]))
                  << (8 * i);
  }
  if (crc32(buf.data(), buf.size() - 4) != stored_crc) {
    throw FormatError("'" + path + "': checksum mismatch");
  }
  Cursor c{buf, sizeof(kTensorMagic)};
  uint8_t dt = c.u8("dtype");
  if (dt > 1) throw FormatError("'" + path + "': unknown dtype code");
  uint8_t nd = c.u8("rank");
  Shape shape;
  int64_t numel = 1;
  for (uint8_t i = 0; i < nd; ++i) {
    int64_t d = static_cast<int64_t>(c.u64("dims"));
    if (d < 1) throw FormatError("'" + path + "': bad dimension");
    shape.push_back(d);
    numel *= d;
  }
  std::vector<double> v(static_cast<size_t>(numel));
  for (int64_t i = 0; i < numel; ++i) v[static_cast<size_t>(i)] = c.f64("data");
  return Tensor::from(shape, std::move(v), dt == 1 ? DType::f32 : DType::f64);
}

}  // namespace spikegrid
