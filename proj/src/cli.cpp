#include "spikegrid/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "spikegrid/analyze.hpp"
#include "spikegrid/config.hpp"
#include "spikegrid/train.hpp"

namespace spikegrid {

namespace {

namespace fs = std::filesystem;

constexpr uint64_t kTagNetInit = 0x4e455457ull;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out.good()) throw IoError("write failure on '" + path + "'");
}

std::vector<std::pair<std::string, std::string>> split_sets(const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& s : sets) {
    size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects section.key=value, got '" + s + "'");
    }
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void reject_network_overrides(const std::vector<std::pair<std::string, std::string>>& sets) {
  for (const auto& [k, v] : sets) {
    if (k.rfind("network.", 0) == 0) {
      throw ConfigError("'" + k + "' cannot be overridden here: the topology comes from the "
                        "checkpoint (use --timesteps for a shorter window)");
    }
  }
}

RunConfig config_from_flags(const std::string& preset, const std::string& config_path,
                            const std::vector<std::string>& sets) {
  std::string ini;
  if (!config_path.empty()) ini = read_text(config_path);
  return build_config(preset, ini, split_sets(sets));
}

std::string fmt_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void print_per_class(std::ostream& out, const std::vector<int64_t>& correct,
                     const std::vector<int64_t>& total) {
  for (size_t c = 0; c < total.size(); ++c) {
    out << "class " << c << ": " << correct[c] << "/" << total[c] << "\n";
  }
}

struct TrainArgs {
  std::string preset, config, out_dir;
  std::vector<std::string> sets;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = config_from_flags(a.preset, a.config, a.sets);
  cfg.train.out_dir = a.out_dir;
  cfg.train.config_text = resolved_text(cfg);
  fs::create_directories(a.out_dir);
  write_text((fs::path(a.out_dir) / "resolved.ini").string(), cfg.train.config_text);

  Dataset train_set = load_train_data(cfg);
  Dataset eval_set = load_eval_data(cfg);
  Rng rng = Rng::derive(cfg.train.seed, kTagNetInit);
  Network net(cfg.net, rng);
  out << "training " << to_string(cfg.net.arch) << " (" << to_string(cfg.net.residual) << ", T="
      << cfg.net.timesteps << ", " << net.params().learnable_scalars() << " parameters) on "
      << train_set.items.size() << " samples\n";
  TrainReport report = fit(net, train_set, eval_set, cfg.train, a.quiet ? nullptr : &out);
  out << "final train accuracy " << fmt_acc(report.final_train_acc) << "\n";
  if (report.final_eval_acc >= 0.0) {
    out << "final eval accuracy " << fmt_acc(report.final_eval_acc) << "\n";
  }
  if (report.best_eval_acc >= 0.0) {
    out << "best eval accuracy " << fmt_acc(report.best_eval_acc) << " (epoch "
        << report.best_epoch << ")\n";
  }
  if (report.stopped_early) out << "accuracy targets reached, stopped early\n";
  out << "checkpoint: " << (fs::path(a.out_dir) / "final.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> sets;
  int timesteps = 0;
  int batch = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  LoadedCheckpoint lc = load_checkpoint(a.checkpoint);
  auto sets = split_sets(a.sets);
  reject_network_overrides(sets);
  RunConfig cfg = build_config("", lc.meta.config_text, sets);
  cfg.net = lc.meta.spec;
  Dataset eval_set = load_eval_data(cfg);
  int batch = a.batch > 0 ? a.batch : cfg.train.batch;
  std::vector<int64_t> correct, total;
  double acc = evaluate(*lc.net, eval_set, batch, cfg.train.encode, cfg.train.seed, a.timesteps,
                        &correct, &total);
  out << "samples " << eval_set.items.size() << ", window "
      << (a.timesteps > 0 ? a.timesteps : lc.meta.spec.timesteps) << " of "
      << lc.meta.spec.timesteps << " steps\n";
  out << "accuracy " << fmt_acc(acc) << "\n";
  print_per_class(out, correct, total);
  return 0;
}

struct AnalyzeArgs {
  std::string checkpoint, out_dir;
  std::vector<std::string> sets;
  int timesteps = 0;
  int batch = 0;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  LoadedCheckpoint lc = load_checkpoint(a.checkpoint);
  auto sets = split_sets(a.sets);
  reject_network_overrides(sets);
  RunConfig cfg = build_config("", lc.meta.config_text, sets);
  cfg.net = lc.meta.spec;
  Dataset eval_set = load_eval_data(cfg);
  int batch = a.batch > 0 ? a.batch : cfg.train.batch;
  fs::create_directories(a.out_dir);
  write_text((fs::path(a.out_dir) / "resolved.ini").string(), resolved_text(cfg));

  ActivityMap am = activity_map(*lc.net, eval_set, batch, cfg.train.encode, cfg.train.seed,
                                a.timesteps);
  write_text((fs::path(a.out_dir) / "activity.csv").string(),
             series_csv(am.layers, am.fraction));
  write_text((fs::path(a.out_dir) / "volume.csv").string(), series_csv(am.layers, am.volume));
  out << "activity.csv and volume.csv: " << am.layers.size() << " sites x " << am.timesteps
      << " steps\n";
  if (lc.meta.spec.norm != NormMode::none) {
    GammaMap gm = gamma_map(*lc.net);
    write_text((fs::path(a.out_dir) / "gamma.csv").string(), series_csv(gm.layers, gm.gamma));
    out << "gamma.csv: per-step learned scales\n";
  }
  double mean_frac = 0.0;
  size_t cells = 0;
  for (const auto& row : am.fraction) {
    for (double v : row) {
      mean_frac += v;
      ++cells;
    }
  }
  out << "mean firing fraction " << fmt_acc(mean_frac / static_cast<double>(cells)) << "\n";
  return 0;
}

struct EncodeArgs {
  std::string mode = "poisson";
  std::string image_file, events_file, out_file;
  int timesteps = 0;
  int64_t index = 0;
  uint64_t seed = 1;
  int64_t height = 0, width = 0;
  bool binarize = false;
};

int cmd_encode(const EncodeArgs& a, std::ostream& out) {
  EncodeMode mode = encode_mode_from_string(a.mode);
  if (a.timesteps < 1) throw ConfigError("--timesteps must be >= 1");
  Tensor result;
  if (mode == EncodeMode::event) {
    if (a.events_file.empty()) throw ConfigError("event mode needs --events");
    if (a.height < 1 || a.width < 1) throw ConfigError("event mode needs --height and --width");
    std::vector<Event> events = read_event_csv(a.events_file);
    result = events_to_frames(events, a.timesteps, a.height, a.width, a.binarize);
    double total = 0.0;
    for (double v : result.data()) total += v;
    out << events.size() << " events -> [" << shape_str(result.shape()) << "], "
        << static_cast<int64_t>(total) << " counted\n";
  } else {
    if (a.image_file.empty()) throw ConfigError("image modes need --image-file");
    Dataset ds = read_cifar_binary(a.image_file);
    if (a.index < 0 || a.index >= static_cast<int64_t>(ds.items.size())) {
      throw ConfigError("--index " + std::to_string(a.index) + " out of range, file holds " +
                        std::to_string(ds.items.size()) + " records");
    }
    const Tensor& img = ds.items[static_cast<size_t>(a.index)].image;
    if (mode == EncodeMode::poisson) {
      Rng rng = Rng::derive(a.seed, 0x454e43ull, static_cast<uint64_t>(a.index));
      result = poisson_encode(rng, img, a.timesteps);
      double total = 0.0;
      for (double v : result.data()) total += v;
      out << "[" << shape_str(result.shape()) << "], " << static_cast<int64_t>(total)
          << " spikes\n";
    } else {
      result = stack(direct_encode(img, a.timesteps));
      out << "[" << shape_str(result.shape()) << "], frame repeated " << a.timesteps << "x\n";
    }
  }
  write_tensor_file(a.out_file, result);
  out << "wrote " << a.out_file << "\n";
  return 0;
}

struct InspectArgs {
  std::string checkpoint, preset, config;
  std::vector<std::string> sets;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  NetSpec spec;
  std::unique_ptr<Network> owned;
  Network* net = nullptr;
  if (!a.checkpoint.empty()) {
    LoadedCheckpoint lc = load_checkpoint(a.checkpoint);
    spec = lc.meta.spec;
    owned = std::move(lc.net);
    net = owned.get();
    out << "checkpoint: " << a.checkpoint << " (epoch " << lc.meta.epoch << ", encode "
        << lc.meta.encode << ")\n";
  } else {
    RunConfig cfg = config_from_flags(a.preset, a.config, a.sets);
    spec = cfg.net;
    Rng rng = Rng::derive(cfg.train.seed, kTagNetInit);
    owned = std::make_unique<Network>(spec, rng);
    net = owned.get();
  }
  out << "arch " << to_string(spec.arch) << ", residual " << to_string(spec.residual)
      << ", norm " << to_string(spec.norm) << "\n";
  out << "input " << spec.input_channels << "x" << spec.input_size << "x" << spec.input_size
      << ", classes " << spec.classes << ", timesteps " << spec.timesteps << "\n";
  out << "conv layers " << net->conv_depth() << ", spiking sites " << net->sites() << "\n";
  out << "learnable parameters: " << net->params().learnable_scalars() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"spiking residual network training and analysis"};
  app.name("spikegrid");
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "train a network and write checkpoints");
  train_cmd->add_option("--preset", ta.preset, "named configuration bundle");
  train_cmd->add_option("--config", ta.config, "INI configuration file");
  train_cmd->add_option("--set", ta.sets, "override section.key=value")->take_all();
  train_cmd->add_option("--out", ta.out_dir, "output directory")->required();
  train_cmd->add_flag("--quiet", ta.quiet, "suppress per-epoch progress");

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the eval split");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "trained checkpoint")->required();
  eval_cmd->add_option("--set", ea.sets, "override section.key=value")->take_all();
  eval_cmd->add_option("--timesteps", ea.timesteps, "shorter inference window");
  eval_cmd->add_option("--batch", ea.batch, "evaluation batch size");

  AnalyzeArgs aa;
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "export firing-rate and scale maps as CSV");
  analyze_cmd->add_option("--checkpoint", aa.checkpoint, "trained checkpoint")->required();
  analyze_cmd->add_option("--out", aa.out_dir, "output directory")->required();
  analyze_cmd->add_option("--set", aa.sets, "override section.key=value")->take_all();
  analyze_cmd->add_option("--timesteps", aa.timesteps, "shorter inference window");
  analyze_cmd->add_option("--batch", aa.batch, "analysis batch size");

  EncodeArgs na;
  CLI::App* encode_cmd = app.add_subcommand("encode", "turn a record into spike frames");
  encode_cmd->add_option("--mode", na.mode, "direct, poisson or event");
  encode_cmd->add_option("--timesteps", na.timesteps, "window length")->required();
  encode_cmd->add_option("--out", na.out_file, "output tensor file")->required();
  encode_cmd->add_option("--image-file", na.image_file, "binary image records");
  encode_cmd->add_option("--index", na.index, "record index in --image-file");
  encode_cmd->add_option("--seed", na.seed, "stochastic encode seed");
  encode_cmd->add_option("--events", na.events_file, "event CSV (t,x,y,p)");
  encode_cmd->add_option("--height", na.height, "event sensor height");
  encode_cmd->add_option("--width", na.width, "event sensor width");
  encode_cmd->add_flag("--binarize", na.binarize, "clamp window counts to 0/1");

  InspectArgs ia;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "describe a checkpoint or configuration");
  inspect_cmd->add_option("--checkpoint", ia.checkpoint, "trained checkpoint");
  inspect_cmd->add_option("--preset", ia.preset, "named configuration bundle");
  inspect_cmd->add_option("--config", ia.config, "INI configuration file");
  inspect_cmd->add_option("--set", ia.sets, "override section.key=value")->take_all();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(ta, out);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(ea, out);
    if (app.got_subcommand(analyze_cmd)) return cmd_analyze(aa, out);
    if (app.got_subcommand(encode_cmd)) return cmd_encode(na, out);
    if (app.got_subcommand(inspect_cmd)) return cmd_inspect(ia, out);
    err << "no command selected\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace spikegrid
