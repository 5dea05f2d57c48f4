#include "safa/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "safa/errors.hpp"

namespace safa {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("optimizer.lambda", "must lie in [0, 1]");
  if (timesteps < 1) throw ConfigError("model.timesteps", "must be >= 1");
}

void NetworkConfig::validate() const {
  if (input_dim < 1) throw ConfigError("dataset.feature_dim", "must be >= 1");
  if (hidden.empty()) throw ConfigError("model.hidden", "needs at least one hidden layer");
  for (auto h : hidden)
    if (h < 1) throw ConfigError("model.hidden", "layer sizes must be >= 1");
  if (classes < 1) throw ConfigError("dataset.base_classes", "must be >= 1");
  if (!(init_scale > 0.0)) throw ConfigError("model.init_scale", "must be positive");
  lif.validate();
}

SpikingNetwork SpikingNetwork::create(const NetworkConfig& cfg, RngStream& init_rng, RngStream& mask_rng) {
  cfg.validate();
  SpikingNetwork net;
  net.lif = cfg.lif;
  std::size_t in = cfg.input_dim;
  auto init = [&](Tensor& w) {
    const double bound = cfg.init_scale / std::sqrt(static_cast<double>(w.rows()));
    for (auto& v : w.data()) v = (2.0 * init_rng.next_uniform() - 1.0) * bound;
  };
  for (auto out : cfg.hidden) {
    auto layer = LifLayerState::create(in, out, cfg.lif, build_mask(out, cfg.eta, mask_rng, cfg.prefix_mask));
    init(layer.weights);
    net.hidden.push_back(std::move(layer));
    in = out;
  }
  net.readout_weights = Tensor({in, cfg.classes});
  net.readout_bias = Tensor({cfg.classes});
  init(net.readout_weights);
  return net;
}

std::vector<Tensor*> SpikingNetwork::parameters() {
  std::vector<Tensor*> p;
  for (auto& l : hidden) {
    p.push_back(&l.weights);
    p.push_back(&l.bias);
  }
  p.push_back(&readout_weights);
  p.push_back(&readout_bias);
  return p;
}

std::vector<const Tensor*> SpikingNetwork::parameters() const {
  std::vector<const Tensor*> p;
  for (const auto& l : hidden) {
    p.push_back(&l.weights);
    p.push_back(&l.bias);
  }
  p.push_back(&readout_weights);
  p.push_back(&readout_bias);
  return p;
}

SampleTrace forward_sample(const SpikingNetwork& net, std::span<const double> x, std::size_t timesteps) {
  if (timesteps < 1) throw DimensionError("forward_sample: timesteps must be >= 1");
  if (x.size() != net.input_dim())
    throw DimensionError("forward_sample: input has " + std::to_string(x.size()) + " features, network expects " +
                         std::to_string(net.input_dim()));
  SampleTrace tr;
  tr.input = Tensor::vector(std::vector<double>(x.begin(), x.end()));
  const std::size_t T = timesteps;
  const bool smooth = net.spike == SpikeFunction::identity;

  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    const auto& layer = net.hidden[l];
    const auto n = layer.neurons();
    LayerTrace lt{Tensor({T, n}), Tensor({T, n})};
    std::vector<double> membrane(n, 0.0), current(n);
    for (std::size_t t = 0; t < T; ++t) {
      const auto in = l == 0 ? std::span<const double>(tr.input.data()) : tr.layers[l - 1].spikes.row(t);
      synaptic_current(layer.weights, layer.bias, in, current);
      if (smooth) {
        auto s = lt.spikes.row(t);
        auto g = lt.gap.row(t);
        for (std::size_t j = 0; j < n; ++j) {
          membrane[j] = net.lif.tau * membrane[j] + current[j];
          g[j] = membrane[j] - layer.thresholds[j];
          s[j] = membrane[j];
        }
      } else {
        lif_integrate(membrane, layer.thresholds.data(), current, net.lif, lt.spikes.row(t), lt.gap.row(t));
      }
    }
    tr.layers.push_back(std::move(lt));
  }

  const auto C = net.classes();
  tr.readout = Tensor({T, C});
  std::vector<double> u(C, 0.0), current(C);
  for (std::size_t t = 0; t < T; ++t) {
    synaptic_current(net.readout_weights, net.readout_bias, tr.layers.back().spikes.row(t), current);
    auto row = tr.readout.row(t);
    for (std::size_t c = 0; c < C; ++c) {
      u[c] = net.lif.tau * u[c] + current[c];
      row[c] = u[c];
    }
  }
  return tr;
}

double sample_loss(const Tensor& readout, std::size_t label, const LossConfig& cfg, Tensor* grad) {
  const auto T = readout.rows();
  const auto C = readout.cols();
  if (label >= C) throw DimensionError("sample_loss: label " + std::to_string(label) + " out of range");
  if (grad) *grad = Tensor({T, C});
  const double inv_t = 1.0 / static_cast<double>(T);
  const double inv_c = 1.0 / static_cast<double>(C);
  double ce_sum = 0.0, mse_sum = 0.0;
  std::vector<double> p(C), dm(C);
  for (std::size_t t = 0; t < T; ++t) {
    const auto u = readout.row(t);
    const double mx = *std::max_element(u.begin(), u.end());
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      p[c] = std::exp(u[c] - mx);
      z += p[c];
    }
    for (auto& v : p) v /= z;
    ce_sum += mx + std::log(z) - u[label];

    const bool soft = cfg.mse_target == MseTarget::softmax;
    double mse = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double y = c == label ? 1.0 : 0.0;
      const double e = (soft ? p[c] : u[c]) - y;
      mse += e * e;
      dm[c] = 2.0 * e * inv_c;
    }
    mse_sum += mse * inv_c;

    if (grad) {
      auto g = grad->row(t);
      double pg = 0.0;
      if (soft)
        for (std::size_t c = 0; c < C; ++c) pg += p[c] * dm[c];
      for (std::size_t c = 0; c < C; ++c) {
        const double dce = p[c] - (c == label ? 1.0 : 0.0);
        const double dmse = soft ? p[c] * (dm[c] - pg) : dm[c];
        g[c] = ((1.0 - cfg.lambda) * dce + cfg.lambda * dmse) * inv_t;
      }
    }
  }
  return ((1.0 - cfg.lambda) * ce_sum + cfg.lambda * mse_sum) * inv_t;
}

BackpropTape record_forward(const SpikingNetwork& net, const Tensor& inputs, std::span<const std::size_t> labels,
                            const LossConfig& cfg) {
  cfg.validate();
  const auto n = inputs.rows();
  if (labels.size() != n) throw DimensionError("record_forward: labels/inputs length mismatch");
  if (n == 0) throw DimensionError("record_forward: empty batch");
  BackpropTape tape;
  tape.loss = cfg;
  tape.samples.reserve(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto tr = forward_sample(net, inputs.row(i), cfg.timesteps);
    tr.label = labels[i];
    tr.loss = sample_loss(tr.readout, tr.label, cfg, &tr.dloss);
    for (auto& g : tr.dloss.data()) g *= inv_n;
    total += tr.loss;
    tape.samples.push_back(std::move(tr));
  }
  tape.loss_value = total * inv_n;
  tape.complete = true;
  return tape;
}

bool replay_matches(const SpikingNetwork& net, const BackpropTape& tape) {
  for (const auto& s : tape.samples) {
    const auto again = forward_sample(net, s.input.data(), tape.loss.timesteps);
    if (again.readout != s.readout || again.layers.size() != s.layers.size()) return false;
    for (std::size_t l = 0; l < s.layers.size(); ++l)
      if (again.layers[l].spikes != s.layers[l].spikes || again.layers[l].gap != s.layers[l].gap) return false;
  }
  return true;
}

namespace {

void check_tape(const SpikingNetwork& net, const BackpropTape& tape) {
  if (!tape.complete) throw TapeIntegrityError("backward: tape has no completed loss");
  const auto T = tape.loss.timesteps;
  for (std::size_t i = 0; i < tape.samples.size(); ++i) {
    const auto& s = tape.samples[i];
    bool ok = s.layers.size() == net.hidden.size() && s.readout.shape() == Shape{T, net.classes()} &&
              s.dloss.shape() == s.readout.shape() && s.input.size() == net.input_dim();
    for (std::size_t l = 0; ok && l < s.layers.size(); ++l)
      ok = s.layers[l].spikes.shape() == Shape{T, net.hidden[l].neurons()} &&
           s.layers[l].gap.shape() == s.layers[l].spikes.shape();
    if (!ok) throw TapeIntegrityError("backward: sample " + std::to_string(i) + " does not match the network");
  }
}

}  // namespace

std::vector<Tensor> backward(const SpikingNetwork& net, const BackpropTape& tape, const ZoConfig& zo, RngStream& rng,
                             const BackwardOptions& opts) {
  check_tape(net, tape);
  const auto params = net.parameters();
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto* p : params) grads.emplace_back(p->shape());

  const std::size_t T = tape.loss.timesteps;
  const double tau = net.lif.tau;
  const bool smooth = net.spike == SpikeFunction::identity;
  const std::size_t L = net.hidden.size();

  auto spike_derivative = [&](double gap) {
    switch (opts.derivative) {
      case SpikeDerivative::zeroth_order:
        return zo_spike_grad(gap, zo, rng);
      case SpikeDerivative::gaussian_surrogate:
        return gaussian_surrogate(gap, zo.delta);
      case SpikeDerivative::sigmoid_surrogate:
        return sigmoid_surrogate(gap, opts.sigmoid_k);
    }
    return 0.0;
  };

  for (const auto& s : tape.samples) {
    // Readout: leaky integrator, no reset.
    Tensor& dwr = grads[2 * L];
    Tensor& dbr = grads[2 * L + 1];
    const auto C = net.classes();
    const auto H = net.feature_dim();
    Tensor ds({T, H});
    std::vector<double> carry(C, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const auto up = s.dloss.row(t);
      for (std::size_t c = 0; c < C; ++c) carry[c] = up[c] + tau * carry[c];
      const auto sin = s.layers[L - 1].spikes.row(t);
      auto dst = ds.row(t);
      for (std::size_t i = 0; i < H; ++i) {
        const auto wrow = net.readout_weights.row(i);
        auto grow = dwr.row(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          grow[c] += sin[i] * carry[c];
          acc += wrow[c] * carry[c];
        }
        dst[i] = acc;
      }
      for (std::size_t c = 0; c < C; ++c) dbr[c] += carry[c];
    }

    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = net.hidden[l];
      const auto& tr = s.layers[l];
      const auto n_in = layer.inputs();
      const auto n_out = layer.neurons();
      Tensor& dw = grads[2 * l];
      Tensor& db = grads[2 * l + 1];
      Tensor ds_in = l > 0 ? Tensor({T, n_in}) : Tensor({1});
      std::vector<double> gpre(n_out, 0.0);
      for (std::size_t t = T; t-- > 0;) {
        const auto spikes = tr.spikes.row(t);
        const auto gaps = tr.gap.row(t);
        const auto dst = ds.row(t);
        for (std::size_t j = 0; j < n_out; ++j) {
          const double dpost = tau * gpre[j];
          double gate = 1.0;
          if (!smooth && net.lif.reset == ResetMode::to_zero) gate = 1.0 - spikes[j];
          double sd = smooth ? 1.0 : spike_derivative(gaps[j]);
          if (zo.mask_gradients && !smooth) sd *= layer.mask.bits[j];
          gpre[j] = dpost * gate + dst[j] * sd;
        }
        const auto in = l == 0 ? std::span<const double>(s.input.data()) : s.layers[l - 1].spikes.row(t);
        for (std::size_t i = 0; i < n_in; ++i) {
          const double x = in[i];
          auto grow = dw.row(i);
          if (x != 0.0)
            for (std::size_t j = 0; j < n_out; ++j) grow[j] += x * gpre[j];
        }
        for (std::size_t j = 0; j < n_out; ++j) db[j] += gpre[j];
        if (l > 0) {
          auto dsin = ds_in.row(t);
          for (std::size_t i = 0; i < n_in; ++i) {
            const auto wrow = layer.weights.row(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < n_out; ++j) acc += wrow[j] * gpre[j];
            dsin[i] = acc;
          }
        }
      }
      if (l > 0) ds = std::move(ds_in);
    }
  }
  return grads;
}

Tensor features(const SampleTrace& trace) {
  const auto& spikes = trace.layers.back().spikes;
  const auto T = spikes.rows();
  Tensor f({spikes.cols()});
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = spikes.row(t);
    for (std::size_t j = 0; j < f.size(); ++j) f[j] += row[j];
  }
  for (auto& v : f.data()) v /= static_cast<double>(T);
  return f;
}

std::vector<double> layer_rates(const SampleTrace& trace) {
  std::vector<double> r;
  for (const auto& l : trace.layers) {
    double sum = 0.0;
    for (double v : l.spikes.data()) sum += v;
    r.push_back(sum / static_cast<double>(l.spikes.size()));
  }
  return r;
}

}  // namespace safa
