#include <cmath>

#include "doctest.h"
#include "spikegrid/neuron.hpp"

using namespace spikegrid;

namespace {

Var scalar_var(double v) { return Var(Tensor::scalar(v)); }

}  // namespace

TEST_CASE("constant drive charges, fires and resets") {
  LifParams p;
  LifState st;
  Var leak = scalar_var(0.5);
  Var drive(Tensor::from({1}, {0.6}));

  LifOut o1 = lif_step(nullptr, st, drive, leak, p);
  CHECK(o1.u_pre.value[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(o1.spikes.value[0] == 0.0);

  LifOut o2 = lif_step(nullptr, st, drive, leak, p);
  CHECK(o2.u_pre.value[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(o2.spikes.value[0] == 0.0);

  LifOut o3 = lif_step(nullptr, st, drive, leak, p);
  CHECK(o3.u_pre.value[0] == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(o3.spikes.value[0] == 1.0);
  CHECK(st.u.value[0] == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("single pulse decays with the leak") {
  LifParams p;
  LifState st;
  Var leak = scalar_var(0.874);

  LifOut o1 = lif_step(nullptr, st, Var(Tensor::from({1}, {1.2})), leak, p);
  CHECK(o1.spikes.value[0] == 1.0);
  CHECK(st.u.value[0] == doctest::Approx(0.2).epsilon(1e-15));

  Var none(Tensor::from({1}, {0.0}));
  LifOut o2 = lif_step(nullptr, st, none, leak, p);
  CHECK(o2.u_pre.value[0] == doctest::Approx(0.1748).epsilon(1e-15));
  CHECK(o2.spikes.value[0] == 0.0);

  LifOut o3 = lif_step(nullptr, st, none, leak, p);
  CHECK(o3.u_pre.value[0] == doctest::Approx(0.1528).epsilon(1e-3));
}

TEST_CASE("random trials match the scalar recurrence oracle exactly") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    double lam = rng.uniform(0.05, 0.995);
    double th = rng.uniform(0.3, 2.0);
    int T = 1 + static_cast<int>(rng.below(8));
    LifParams p;
    p.u_th = th;
    LifState st;
    Var leak = scalar_var(lam);
    double u = 0.0;
    bool first = true;
    for (int t = 0; t < T; ++t) {
      double c = rng.uniform(-0.5, 2.0);
      LifOut out = lif_step(nullptr, st, Var(Tensor::from({1}, {c})), leak, p);
      double upre = first ? c : c + u * lam;
      first = false;
      double s = upre >= th ? 1.0 : 0.0;
      u = upre - th * s;
      CHECK(out.u_pre.value[0] == upre);
      CHECK(out.spikes.value[0] == s);
      CHECK(st.u.value[0] == u);
    }
  }
}

TEST_CASE("spikes are binary and the membrane stays bounded") {
  Rng rng(99);
  double lam = 0.9;
  double bound = 1.0 / (1.0 - lam);
  LifParams p;
  LifState st;
  Var leak = scalar_var(lam);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> c(16);
    for (double& v : c) v = rng.uniform(0.0, 1.0);
    LifOut out = lif_step(nullptr, st, Var(Tensor::from({16}, std::move(c))), leak, p);
    for (int64_t i = 0; i < 16; ++i) {
      double s = out.spikes.value[i];
      CHECK((s == 0.0 || s == 1.0));
      CHECK(out.u_pre.value[i] <= bound + 1e-9);
    }
  }
}

TEST_CASE("larger leak holds more charge") {
  LifParams p;
  LifState a, b;
  Var leak_lo = scalar_var(0.3);
  Var leak_hi = scalar_var(0.9);
  Var drive(Tensor::from({1}, {0.01}));
  for (int t = 0; t < 30; ++t) {
    LifOut lo = lif_step(nullptr, a, drive, leak_lo, p);
    LifOut hi = lif_step(nullptr, b, drive, leak_hi, p);
    CHECK(hi.u_pre.value[0] >= lo.u_pre.value[0]);
  }
}

TEST_CASE("gradient flows through the reset path") {
  LifParams p;
  Tape tape;
  Tensor c1 = Tensor::from({1}, {1.2});
  Var c1v = tape.leaf(c1, 0);
  LifState st;
  Var leak = scalar_var(0.874);
  lif_step(&tape, st, c1v, leak, p);
  LifOut o2 = lif_step(&tape, st, Var(Tensor::from({1}, {0.0})), leak, p);
  GradientStore g = tape.backward(ops::sum(&tape, o2.u_pre).node);
  // d u2 / d c1 = leak * (1 - u_th * surrogate(u1)) with u1 = 1.2
  double expect = 0.874 * (1.0 - ops::surrogate_scalar(1.2, 1.0, 0.3, true));
  CHECK(g.get(0, {1}, DType::f64)[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("soft forward mode is smooth and differentiable") {
  LifParams p;
  p.soft_forward = true;
  LifState st;
  Var leak = scalar_var(0.5);
  LifOut o = lif_step(nullptr, st, Var(Tensor::from({1}, {1.0})), leak, p);
  // ramp value at the threshold: alpha/2 of the way up
  CHECK(o.spikes.value[0] == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(st.u.value[0] == doctest::Approx(1.0 - 0.15).epsilon(1e-12));
}

TEST_CASE("leak must be a scalar") {
  LifParams p;
  LifState st;
  Var leak(Tensor::from({2}, {0.5, 0.5}));
  CHECK_THROWS_AS(lif_step(nullptr, st, Var(Tensor::from({2}, {0.1, 0.2})), leak, p),
                  DimensionError);
}

TEST_CASE("learnable leak squashing") {
  Var raw(Tensor::scalar(0.0));
  CHECK(leak_from_raw(nullptr, raw).value[0] == 0.5);

  for (double l : {0.1, 0.5, 0.874, 0.986}) {
    double r = raw_from_leak(l);
    Var back = leak_from_raw(nullptr, Var(Tensor::scalar(r)));
    CHECK(back.value[0] == doctest::Approx(l).epsilon(1e-12));
  }
  CHECK(raw_from_leak(0.986) == doctest::Approx(std::log(0.986 / 0.014)).epsilon(1e-12));
  CHECK_THROWS_AS(raw_from_leak(0.0), ContractError);
  CHECK_THROWS_AS(raw_from_leak(1.0), ContractError);

  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    double r = rng.uniform(-30.0, 30.0);
    double lam = leak_from_raw(nullptr, Var(Tensor::scalar(r))).value[0];
    CHECK(lam > 0.0);
    CHECK(lam < 1.0);
  }
}
