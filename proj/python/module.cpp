#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "safa/config.hpp"
#include "safa/energy.hpp"
#include "safa/errors.hpp"
#include "safa/fscil.hpp"
#include "safa/lif.hpp"
#include "safa/metrics.hpp"
#include "safa/results.hpp"
#include "safa/zo.hpp"

namespace py = pybind11;
using namespace safa;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() < 1 || a.ndim() > 2) throw DimensionError("expected a 1-D or 2-D array");
  Shape shape(a.shape(), a.shape() + a.ndim());
  for (auto d : shape)
    if (d == 0) throw DimensionError("arrays must not be empty");
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict metrics_dict(const SessionMetrics& m) {
  py::dict d;
  d["session"] = m.session;
  d["classes_seen"] = m.classes_seen;
  d["samples"] = m.samples;
  d["accuracy"] = m.accuracy;
  d["base_accuracy"] = m.base_accuracy;
  d["novel_accuracy"] = m.novel_accuracy;
  d["hacc"] = m.hacc;
  d["mbr"] = m.breakdown.mbr;
  d["mar"] = m.breakdown.mar;
  d["layer_rates"] = m.layer_rates;
  d["mean_rate"] = m.mean_rate;
  d["abstained"] = m.abstained;
  return d;
}

}  // namespace

PYBIND11_MODULE(_safa, m) {
  m.doc() = "Spiking few-shot class-incremental learning core";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<DimensionError>(m, "DimensionError", error);
  py::register_exception<DegenerateError>(m, "DegenerateError", error);
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", error);
  py::register_exception<FormatError>(m, "FormatError", error);
  py::register_exception<ProtocolError>(m, "ProtocolError", error);
  py::register_exception<CheckpointMismatchError>(m, "CheckpointMismatchError", error);

  m.def("matmul", [](const Array& a, const Array& b) { return to_array(matmul(to_tensor(a), to_tensor(b))); });
  m.def(
      "spd_solve",
      [](const Array& g, const Array& rhs, double jitter) {
        return to_array(spd_solve(to_tensor(g), to_tensor(rhs), jitter));
      },
      py::arg("g"), py::arg("rhs"), py::arg("jitter") = 0.0);
  m.def("cosine_similarity",
        [](const Array& a, const Array& b) { return cosine_similarity(to_vector(a), to_vector(b)); });

  m.def(
      "normal_draws",
      [](std::uint64_t seed, std::uint64_t stream, std::size_t n) {
        RngStream rng(seed, stream);
        return to_array(gaussian_sample(rng, n));
      },
      py::arg("seed"), py::arg("stream"), py::arg("n"));

  m.def(
      "lif_step",
      [](const Array& membrane, const Array& thresholds, const Array& current, double tau, bool subtract,
         double u_reset) {
        LifConfig cfg;
        cfg.tau = tau;
        cfg.reset = subtract ? ResetMode::by_subtraction : ResetMode::to_zero;
        cfg.u_reset = u_reset;
        cfg.validate();
        auto u = to_vector(membrane);
        std::vector<double> s(u.size());
        lif_integrate(u, to_vector(thresholds), to_vector(current), cfg, s);
        return py::make_tuple(to_array(Tensor::vector(s)), to_array(Tensor::vector(u)));
      },
      py::arg("membrane"), py::arg("thresholds"), py::arg("current"), py::arg("tau") = 0.5,
      py::arg("subtract") = false, py::arg("u_reset") = 0.0, "Returns (spikes, membrane after reset).");
  m.def(
      "build_mask",
      [](std::size_t channels, double eta, std::uint64_t seed, bool prefix) {
        RngStream rng(seed, streams::kMask);
        return to_array(build_mask(channels, eta, rng, prefix).bits);
      },
      py::arg("channels"), py::arg("eta"), py::arg("seed") = 0, py::arg("prefix") = false);
  m.def(
      "adaptation_vector",
      [](const Array& bits, double beta, double gamma) {
        return to_array(adaptation_matrix(ChannelMask{to_tensor(bits), 0.0}, AdaptationConfig{beta, gamma, 1}));
      },
      py::arg("bits"), py::arg("beta") = 1.2, py::arg("gamma") = 0.01);
  m.def(
      "update_thresholds",
      [](const Array& th, const Array& a, const Array& rn, const Array& rb, int sign) {
        return to_array(update_thresholds(to_tensor(th), to_tensor(a), to_tensor(rn), to_tensor(rb), sign));
      },
      py::arg("thresholds"), py::arg("a"), py::arg("rates_new"), py::arg("rates_base"), py::arg("sign") = -1);

  m.def("zo_branch", &zo_branch, py::arg("u"), py::arg("delta"), py::arg("z"));
  m.def(
      "zo_spike_grad",
      [](double u, double delta, std::size_t b, std::uint64_t seed) {
        ZoConfig cfg{delta, b};
        cfg.validate();
        RngStream rng(seed, streams::kZo);
        return zo_spike_grad(u, cfg, rng);
      },
      py::arg("u"), py::arg("delta") = 0.5, py::arg("b") = 5, py::arg("seed") = 0);
  m.def("gaussian_surrogate", &gaussian_surrogate, py::arg("u"), py::arg("delta") = 0.5);
  m.def("sigmoid_surrogate", &sigmoid_surrogate, py::arg("u"), py::arg("k") = 4.0);

  m.def(
      "base_projector", [](const Array& base, double jitter) { return to_array(base_projector(to_tensor(base), jitter)); },
      py::arg("base"), py::arg("jitter") = 0.0);
  m.def(
      "fuse_prototypes",
      [](const Array& novel, const Array& projector, double alpha) {
        return to_array(fuse_prototypes(to_tensor(novel), to_tensor(projector), alpha));
      },
      py::arg("novel"), py::arg("projector"), py::arg("alpha") = 0.5);
  m.def(
      "classify",
      [](const Array& feature, const Array& prototypes) {
        const auto c = classify(to_vector(feature), to_tensor(prototypes));
        return py::make_tuple(c.label, c.similarity);
      },
      py::arg("feature"), py::arg("prototypes"));

  m.def("harmonic_accuracy", &harmonic_accuracy);
  m.def("delta_last", [](const std::vector<double>& ours, double baseline_last) {
    return avg_and_delta_last(ours, baseline_last).delta_last;
  });
  m.def(
      "confusion",
      [](std::size_t cbn, std::size_t mbn, std::size_t mnn, std::size_t cnn) {
        ConfusionBreakdown b{cbn, mbn, mnn, cnn};
        finish_ratios(b);
        return py::make_tuple(b.mbr, b.mar);
      },
      py::arg("cbn"), py::arg("mbn"), py::arg("mnn"), py::arg("cnn"), "Returns (mbr, mar); None when undefined.");

  m.def("flops_of_dense", &flops_of_dense);
  m.def("flops_of_conv2d", &flops_of_conv2d, py::arg("h"), py::arg("w"), py::arg("c_in"), py::arg("c_out"),
        py::arg("k"), py::arg("stride") = 1, py::arg("padding") = 0);
  m.def(
      "energy",
      [](double flops, double zeta, std::size_t timesteps, double e_mac, double e_ac) {
        const std::vector<LayerCostProfile> p{{"layer", LayerKind::dense, flops, zeta, timesteps}};
        const auto r = energy_report(p, EnergyConstants{e_mac, e_ac});
        return py::make_tuple(r.total_snn_pj, r.total_ann_pj);
      },
      py::arg("flops"), py::arg("zeta"), py::arg("timesteps"), py::arg("e_mac") = 4.6, py::arg("e_ac") = 0.9,
      "Returns (snn_pj, ann_pj).");

  m.def("canonical_config", [](const std::string& text) {
    auto cfg = parse_config(text);
    cfg.validate();
    return cfg.canonical_text();
  });
  m.def(
      "run_experiment",
      [](const std::string& config_text, std::optional<std::uint64_t> seed) {
        auto cfg = parse_config(config_text);
        if (seed) cfg.seed = *seed;
        cfg.validate();
        RunOutput out;
        {
          py::gil_scoped_release release;
          out = run_fscil(make_stream(cfg), cfg.experiment());
        }
        py::list sessions;
        for (const auto& s : out.results.sessions) sessions.append(metrics_dict(s));
        py::dict d;
        d["sessions"] = sessions;
        d["weight_hashes"] = out.weight_hashes;
        return d;
      },
      py::arg("config_text") = "", py::arg("seed") = py::none(),
      "Trains the base session and runs every incremental session of a config.");
}
