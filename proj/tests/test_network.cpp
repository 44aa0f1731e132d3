#include <cmath>

#include "doctest.h"
#include "spikegrid/network.hpp"

using namespace spikegrid;

namespace {

NetSpec tiny_spec(ResidualMode mode = ResidualMode::s2s, NormMode norm = NormMode::per_step) {
  NetSpec s;
  s.input_channels = 3;
  s.input_size = 8;
  s.base_width = 4;
  s.blocks_per_stage = 1;
  s.classes = 10;
  s.timesteps = 4;
  s.residual = mode;
  s.norm = norm;
  return s;
}

std::vector<Tensor> random_frames(Rng& rng, int T, int64_t n, int64_t c, int64_t hw) {
  std::vector<Tensor> frames;
  for (int t = 0; t < T; ++t) {
    std::vector<double> v(static_cast<size_t>(n * c * hw * hw));
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    frames.push_back(Tensor::from({n, c, hw, hw}, std::move(v)));
  }
  return frames;
}

struct ShapeProbe : SpikeRecorder {
  std::vector<Shape> shapes;
  std::vector<Tensor> readouts;
  void on_spikes(int site, int t, const Tensor& value) override {
    if (t == 0 && static_cast<size_t>(site) == shapes.size()) shapes.push_back(value.shape());
  }
  void on_readout(int, const Tensor& current) override { readouts.push_back(current); }
};

}  // namespace

TEST_CASE("canonical parameter counts") {
  SUBCASE("depth-38 narrow ten-way") {
    NetSpec s;
    s.base_width = 16;
    s.blocks_per_stage = 6;
    s.classes = 10;
    s.timesteps = 50;
    Rng rng(1);
    Network net(s, rng);
    CHECK(net.params().learnable_scalars() == 634000);
    CHECK(net.conv_depth() == 37);
  }
  SUBCASE("depth-38 wide ten-way with a boosted head") {
    NetSpec s;
    s.base_width = 32;
    s.blocks_per_stage = 6;
    s.classes = 10;
    s.timesteps = 50;
    s.boosting = true;
    s.boost_group = 10;
    Rng rng(1);
    Network net(s, rng);
    CHECK(net.params().learnable_scalars() == 2399776);
  }
}

TEST_CASE("vgg11 layout and parameter count") {
  NetSpec s;
  s.arch = Arch::vgg11;
  s.input_size = 32;
  s.base_width = 4;
  s.classes = 10;
  s.timesteps = 2;
  Rng rng(1);
  Network net(s, rng);
  CHECK(net.sites() == 8);
  CHECK(net.conv_depth() == 8);
  CHECK(net.params().learnable_scalars() == 579088);
  CHECK(net.site_name(0) == "conv1");
  CHECK(net.site_name(7) == "conv8");

  NetSpec bad = s;
  bad.input_size = 16;
  Rng rng2(1);
  CHECK_THROWS_AS(Network(bad, rng2), ConfigError);
}

TEST_CASE("site naming and optional parameters") {
  NetSpec s = tiny_spec();
  Rng rng(2);
  Network net(s, rng);
  CHECK(net.sites() == 7);
  CHECK(net.site_name(0) == "stem");
  CHECK(net.site_name(1) == "stage1.block1.lif1");
  CHECK(net.site_name(6) == "stage3.block1.lif2");
  int64_t base = net.params().learnable_scalars();

  NetSpec with_bias = s;
  with_bias.fc_bias = true;
  Rng r2(2);
  CHECK(Network(with_bias, r2).params().learnable_scalars() == base + s.classes);

  NetSpec with_beta = s;
  with_beta.learn_beta = true;
  Rng r3(2);
  // one beta per gamma: norms on stem, six block norms, two projections
  Network nb(with_beta, r3);
  CHECK(nb.params().find("stem.norm.t0.beta") >= 0);

  NetSpec plif = s;
  plif.leak_mode = LeakMode::plif_layer;
  Rng r4(2);
  Network np(plif, r4);
  CHECK(np.params().learnable_scalars() == base + net.sites());
  CHECK(np.params().find("leak.stem.raw") >= 0);
  CHECK(np.params().find("leak.stage2.block1.lif1.raw") >= 0);

  NetSpec shared = s;
  shared.leak_mode = LeakMode::plif_shared;
  Rng r5(2);
  CHECK(Network(shared, r5).params().find("leak.raw") >= 0);
}

TEST_CASE("initialization is seed-deterministic") {
  NetSpec s = tiny_spec();
  Rng a(9), b(9), c(10);
  Network na(s, a), nb(s, b), nc(s, c);
  const Tensor& wa = na.params().at(na.params().find("stem.conv.w")).value;
  const Tensor& wb = nb.params().at(nb.params().find("stem.conv.w")).value;
  const Tensor& wc = nc.params().at(nc.params().find("stem.conv.w")).value;
  bool same = true, diff = false;
  for (int64_t i = 0; i < wa.numel(); ++i) {
    same = same && wa[i] == wb[i];
    diff = diff || wa[i] != wc[i];
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("forward validates its frames") {
  NetSpec s = tiny_spec();
  Rng rng(3);
  Network net(s, rng);
  CHECK_THROWS_AS(net.forward(nullptr, {}, false), ContractError);
  CHECK_THROWS_AS(net.forward(nullptr, {Tensor::zeros({2, 3, 8})}, false), DimensionError);
  CHECK_THROWS_AS(net.forward(nullptr, {Tensor::zeros({2, 1, 8, 8})}, false), DimensionError);
  CHECK_THROWS_AS(net.forward(nullptr, {Tensor::zeros({2, 3, 16, 16})}, false), DimensionError);
  std::vector<Tensor> mixed = {Tensor::zeros({2, 3, 8, 8}), Tensor::zeros({1, 3, 8, 8})};
  CHECK_THROWS_AS(net.forward(nullptr, mixed, false), DimensionError);
  std::vector<Tensor> too_long(5, Tensor::zeros({2, 3, 8, 8}));
  CHECK_THROWS_AS(net.forward(nullptr, too_long, false), ContractError);
  std::vector<Tensor> f32_frames = {Tensor::zeros({2, 3, 8, 8}, DType::f32)};
  CHECK_THROWS_AS(net.forward(nullptr, f32_frames, false), DimensionError);
}

TEST_CASE("forward runs every residual mode and is deterministic") {
  for (ResidualMode mode : {ResidualMode::s2m, ResidualMode::s2s, ResidualMode::v2v}) {
    NetSpec s = tiny_spec(mode);
    Rng rng(5);
    Network net(s, rng);
    Rng frng(6);
    std::vector<Tensor> frames = random_frames(frng, 4, 2, 3, 8);
    Var a = net.forward(nullptr, frames, false);
    Var b = net.forward(nullptr, frames, false);
    CHECK(same_shape(a.value.shape(), {2, 10}));
    for (int64_t i = 0; i < a.value.numel(); ++i) CHECK(a.value[i] == b.value[i]);
  }
}

TEST_CASE("norm-free forward equals a hand-built op chain") {
  NetSpec s = tiny_spec(ResidualMode::s2s, NormMode::none);
  Rng rng(7);
  Network net(s, rng);
  Rng frng(8);
  std::vector<Tensor> frames = random_frames(frng, 2, 2, 3, 8);
  Var got = net.forward(nullptr, frames, false);

  ParamStore& ps = net.params();
  auto w = [&](const std::string& name) {
    return Var(ps.at(ps.find(name)).value);
  };
  LifParams lif;
  Var leak(Tensor::scalar(s.leak_init));
  LifState stem_st;
  std::vector<LifState> st1(3), st2(3);
  const char* stages[3] = {"stage1.block1", "stage2.block1", "stage3.block1"};
  Var acc;
  for (int t = 0; t < 2; ++t) {
    Var x(frames[static_cast<size_t>(t)]);
    Var cur = ops::conv2d(nullptr, x, w("stem.conv.w"), 1, 1);
    Var sp = lif_step(nullptr, stem_st, cur, leak, lif).spikes;
    for (int b = 0; b < 3; ++b) {
      std::string base = stages[b];
      int stride = b == 0 ? 1 : 2;
      Var c1 = ops::conv2d(nullptr, sp, w(base + ".conv1.w"), stride, 1);
      Var o1 = lif_step(nullptr, st1[static_cast<size_t>(b)], c1, leak, lif).spikes;
      Var c2 = ops::conv2d(nullptr, o1, w(base + ".conv2.w"), 1, 1);
      Var skip = b == 0 ? sp : ops::conv2d(nullptr, sp, w(base + ".skip.w"), stride, 0);
      Var o2 = lif_step(nullptr, st2[static_cast<size_t>(b)], c2, leak, lif).spikes;
      sp = ops::add(nullptr, o2, skip);
    }
    Var f = ops::linear(nullptr, ops::global_avg_pool(nullptr, sp), w("head.w"), nullptr);
    acc = t == 0 ? f : ops::add(nullptr, acc, f);
  }
  Var expect = ops::scale(nullptr, acc, 1.0 / 2.0);
  REQUIRE(same_shape(got.value.shape(), expect.value.shape()));
  for (int64_t i = 0; i < got.value.numel(); ++i) CHECK(got.value[i] == expect.value[i]);
}

TEST_CASE("prefix evaluation matches per-step readout accumulation bitwise") {
  NetSpec s = tiny_spec(ResidualMode::v2v);
  Rng rng(11);
  Network net(s, rng);
  Rng frng(12);
  std::vector<Tensor> frames = random_frames(frng, 4, 2, 3, 8);

  ShapeProbe probe;
  net.forward(nullptr, frames, false, &probe);
  REQUIRE(probe.readouts.size() == 4);

  std::vector<Tensor> half(frames.begin(), frames.begin() + 2);
  Var short_run = net.forward(nullptr, half, false);

  Var acc(probe.readouts[0]);
  acc = ops::add(nullptr, acc, Var(probe.readouts[1]));
  Tensor expect = ops::scale(nullptr, acc, 1.0 / 2.0).value;
  for (int64_t i = 0; i < expect.numel(); ++i) CHECK(short_run.value[i] == expect[i]);
}

TEST_CASE("recorder sees binary spikes except after spike summation") {
  NetSpec s = tiny_spec(ResidualMode::s2s);
  Rng rng(13);
  Network net(s, rng);
  Rng frng(14);
  std::vector<Tensor> frames = random_frames(frng, 4, 2, 3, 8);

  struct Binaries : SpikeRecorder {
    Network* net = nullptr;
    bool all_binary_lif = true;
    double max_seen = 0.0;
    void on_spikes(int site, int, const Tensor& value) override {
      bool is_sum_site = net->site_name(site).find("lif2") != std::string::npos;
      for (double v : value.data()) {
        max_seen = std::max(max_seen, v);
        if (!is_sum_site && v != 0.0 && v != 1.0) all_binary_lif = false;
      }
    }
  } rec;
  rec.net = &net;
  net.forward(nullptr, frames, false, &rec);
  CHECK(rec.all_binary_lif);
}

TEST_CASE("stem variants downsample as the input grows") {
  auto probe_spatial = [](int64_t input_size) {
    NetSpec s = tiny_spec();
    s.input_size = input_size;
    Rng rng(15);
    Network net(s, rng);
    Rng frng(16);
    std::vector<Tensor> frames = random_frames(frng, 1, 2, 3, input_size);
    ShapeProbe probe;
    net.forward(nullptr, frames, false, &probe);
    return probe.shapes[0];
  };
  CHECK(probe_spatial(32) == Shape{2, 4, 32, 32});   // small stem keeps resolution
  CHECK(probe_spatial(48) == Shape{2, 4, 24, 24});   // medium stem halves
  CHECK(probe_spatial(96) == Shape{2, 4, 24, 24});   // large stem quarters
}

TEST_CASE("boosting widens the head and averages back") {
  NetSpec s = tiny_spec();
  s.boosting = true;
  s.boost_group = 4;
  Rng rng(17);
  Network net(s, rng);
  CHECK(net.params().at(net.params().find("head.w")).value.dim(0) == 40);
  Rng frng(18);
  std::vector<Tensor> frames = random_frames(frng, 2, 2, 3, 8);
  Var out = net.forward(nullptr, frames, false);
  CHECK(same_shape(out.value.shape(), {2, 10}));
}

TEST_CASE("time averaged norm accepts windows past the statistics length") {
  NetSpec s = tiny_spec(ResidualMode::s2s, NormMode::time_avg);
  Rng rng(19);
  Network net(s, rng);
  Rng frng(20);
  std::vector<Tensor> frames = random_frames(frng, 6, 2, 3, 8);  // longer than timesteps
  CHECK_NOTHROW(net.forward(nullptr, frames, false));
}

TEST_CASE("training mode then eval mode round trip") {
  NetSpec s = tiny_spec(ResidualMode::v2v);
  Rng rng(21);
  Network net(s, rng);
  Rng frng(22);
  std::vector<Tensor> frames = random_frames(frng, 4, 2, 3, 8);
  Tape tape;
  Var out = net.forward(&tape, frames, true);
  CHECK(out.tracked());
  // eval afterwards with a single sample: running stats exist for every slot
  std::vector<Tensor> one = random_frames(frng, 4, 1, 3, 8);
  CHECK_NOTHROW(net.forward(nullptr, one, false));
}
