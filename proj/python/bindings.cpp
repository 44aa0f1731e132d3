#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spikegrid/data.hpp"
#include "spikegrid/encode.hpp"
#include "spikegrid/network.hpp"
#include "spikegrid/ops.hpp"

namespace py = pybind11;
using namespace spikegrid;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DArray& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(a.shape(i));
  std::vector<double> v(a.data(), a.data() + a.size());
  return Tensor::from(shape, std::move(v));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  auto span = t.data();
  std::copy(span.begin(), span.end(), out.mutable_data());
  return out;
}

NetSpec make_spec(const std::string& arch, int64_t input_channels, int64_t input_size,
                  int64_t base_width, int blocks_per_stage, int64_t classes, int timesteps,
                  const std::string& residual, bool boosting, int boost_group, bool learn_beta,
                  bool fc_bias) {
  NetSpec s;
  s.arch = arch_from_string(arch);
  s.input_channels = input_channels;
  s.input_size = input_size;
  s.base_width = base_width;
  s.blocks_per_stage = blocks_per_stage;
  s.classes = classes;
  s.timesteps = timesteps;
  s.residual = residual_mode_from_string(residual);
  s.boosting = boosting;
  s.boost_group = boost_group;
  s.learn_beta = learn_beta;
  s.fc_bias = fc_bias;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "spiking residual network kernels";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<Error>(m, "SpikegridError");

  m.def(
      "conv2d",
      [](const DArray& x, const DArray& w, int stride, int padding) {
        Var y = ops::conv2d(nullptr, to_tensor(x), to_tensor(w), stride, padding);
        return to_array(y.value);
      },
      py::arg("x"), py::arg("w"), py::arg("stride") = 1, py::arg("padding") = 0,
      "Zero-padded cross-correlation of [N,C,H,W] with [F,C,KH,KW].");

  m.def(
      "lif_sequence",
      [](const DArray& currents, double leak, double u_th, double alpha) {
        Tensor seq = to_tensor(currents);
        if (seq.ndim() < 1) throw ContractError("lif_sequence: need a leading time axis");
        int64_t T = seq.dim(0);
        LifParams p;
        p.u_th = u_th;
        p.alpha = alpha;
        LifState state;
        Var leak_v(Tensor::scalar(leak));
        std::vector<Tensor> spikes, potentials;
        for (int64_t t = 0; t < T; ++t) {
          LifOut out = lif_step(nullptr, state, take0(seq, t), leak_v, p);
          spikes.push_back(out.spikes.value);
          potentials.push_back(out.u_pre.value);
        }
        return py::make_tuple(to_array(stack(spikes)), to_array(stack(potentials)));
      },
      py::arg("currents"), py::arg("leak"), py::arg("u_th") = 1.0, py::arg("alpha") = 0.3,
      "Run leaky integrate-and-fire over axis 0; returns (spikes, pre-reset potentials).");

  m.def(
      "surrogate",
      [](const DArray& u, double u_th, double alpha, bool center_at_threshold) {
        return to_array(ops::surrogate_value(to_tensor(u), u_th, alpha, center_at_threshold));
      },
      py::arg("u"), py::arg("u_th") = 1.0, py::arg("alpha") = 0.3,
      py::arg("center_at_threshold") = true,
      "Triangular pseudo-derivative of the spike threshold.");

  m.def(
      "soft_spike",
      [](const DArray& u, double u_th, double alpha, bool center_at_threshold) {
        return to_array(ops::soft_spike_value(to_tensor(u), u_th, alpha, center_at_threshold));
      },
      py::arg("u"), py::arg("u_th") = 1.0, py::arg("alpha") = 0.3,
      py::arg("center_at_threshold") = true,
      "Smooth ramp whose derivative is the triangular surrogate.");

  m.def(
      "poisson_encode",
      [](uint64_t seed, const DArray& image, int T) {
        Rng rng(seed);
        return to_array(poisson_encode(rng, to_tensor(image), T));
      },
      py::arg("seed"), py::arg("image"), py::arg("timesteps"),
      "Bernoulli spike trains with rate equal to pixel intensity; [T,C,H,W].");

  m.def(
      "events_to_frames",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& events, int T,
         int64_t height, int64_t width, bool binarize) {
        if (events.ndim() != 2 || events.shape(1) != 4) {
          throw ContractError("events must be an [n, 4] array of (t, x, y, p)");
        }
        std::vector<Event> ev;
        auto r = events.unchecked<2>();
        for (py::ssize_t i = 0; i < r.shape(0); ++i) {
          ev.push_back(Event{r(i, 0), static_cast<int>(r(i, 1)), static_cast<int>(r(i, 2)),
                             static_cast<int>(r(i, 3))});
        }
        return to_array(events_to_frames(ev, T, height, width, binarize));
      },
      py::arg("events"), py::arg("timesteps"), py::arg("height"), py::arg("width"),
      py::arg("binarize") = false,
      "Bucket (t,x,y,p) events into equal windows; returns [T,2,H,W] counts.");

  m.def(
      "param_count",
      [](const std::string& arch, int64_t input_channels, int64_t input_size, int64_t base_width,
         int blocks_per_stage, int64_t classes, int timesteps, const std::string& residual,
         bool boosting, int boost_group, bool learn_beta, bool fc_bias) {
        NetSpec s = make_spec(arch, input_channels, input_size, base_width, blocks_per_stage,
                              classes, timesteps, residual, boosting, boost_group, learn_beta,
                              fc_bias);
        Rng rng(1);
        Network net(s, rng);
        return net.params().learnable_scalars();
      },
      py::arg("arch") = "sresnet", py::arg("input_channels") = 3, py::arg("input_size") = 32,
      py::arg("base_width") = 16, py::arg("blocks_per_stage") = 6, py::arg("classes") = 10,
      py::arg("timesteps") = 50, py::arg("residual") = "v2v", py::arg("boosting") = false,
      py::arg("boost_group") = 10, py::arg("learn_beta") = false, py::arg("fc_bias") = false,
      "Learnable scalar count of the described network.");

  m.def(
      "forward",
      [](const std::string& arch, int64_t base_width, int blocks_per_stage, int64_t classes,
         const std::string& residual, uint64_t seed, const DArray& frames) {
        Tensor seq = to_tensor(frames);
        if (seq.ndim() != 5) throw ContractError("frames must be [T,N,C,H,W]");
        NetSpec s = make_spec(arch, seq.dim(2), seq.dim(3), base_width, blocks_per_stage, classes,
                              static_cast<int>(seq.dim(0)), residual, false, 10, false, false);
        Rng rng(seed);
        Network net(s, rng);
        std::vector<Tensor> steps;
        for (int64_t t = 0; t < seq.dim(0); ++t) steps.push_back(take0(seq, t));
        Var out = net.forward(nullptr, steps, false);
        return to_array(out.value);
      },
      py::arg("arch"), py::arg("base_width"), py::arg("blocks_per_stage"), py::arg("classes"),
      py::arg("residual"), py::arg("seed"), py::arg("frames"),
      "Fresh randomly initialized network applied to [T,N,C,H,W] frames (eval mode).");
}
