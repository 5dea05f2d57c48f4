#include "safa/lif.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "safa/errors.hpp"

namespace safa {

void LifConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("model.tau", "must lie in (0, 1]");
  if (!std::isfinite(theta_init)) throw ConfigError("model.theta_init", "must be finite");
  if (!std::isfinite(u_reset)) throw ConfigError("model.u_reset", "must be finite");
}

void AdaptationConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("model.beta", "must be positive");
  if (!(gamma_mask > 0.0)) throw ConfigError("model.gamma_mask", "must be positive");
  if (passes < 0) throw ConfigError("model.passes", "must be non-negative");
}

std::size_t ChannelMask::active() const {
  std::size_t n = 0;
  for (double b : bits.data()) n += b != 0.0;
  return n;
}

LifLayerState LifLayerState::create(std::size_t in, std::size_t out, const LifConfig& cfg, ChannelMask mask) {
  if (mask.channels() != out)
    throw DimensionError("mask has " + std::to_string(mask.channels()) + " channels, layer has " +
                         std::to_string(out));
  LifLayerState s;
  s.weights = Tensor({in, out});
  s.bias = Tensor({out});
  s.membrane = Tensor({out});
  s.thresholds = Tensor({out}, cfg.theta_init);
  s.firing_counts = Tensor({out});
  s.mask = std::move(mask);
  return s;
}

void LifLayerState::reset_membrane() { membrane.fill(0.0); }

void LifLayerState::reset_statistics() {
  firing_counts.fill(0.0);
  steps_seen = 0;
}

void lif_integrate(std::span<double> membrane, std::span<const double> thresholds,
                   std::span<const double> current, const LifConfig& cfg, std::span<double> spikes,
                   std::span<double> gap) {
  const auto n = membrane.size();
  if (thresholds.size() != n || current.size() != n || spikes.size() != n || (!gap.empty() && gap.size() != n))
    throw DimensionError("lif_integrate: expected " + std::to_string(n) + " neurons");
  for (std::size_t i = 0; i < n; ++i) {
    const double u = cfg.tau * membrane[i] + current[i];
    const bool fire = u >= thresholds[i];
    if (!gap.empty()) gap[i] = u - thresholds[i];
    spikes[i] = fire ? 1.0 : 0.0;
    if (!fire)
      membrane[i] = u;
    else if (cfg.reset == ResetMode::to_zero)
      membrane[i] = cfg.u_reset;
    else
      membrane[i] = u - thresholds[i];
  }
}

Tensor lif_step(LifLayerState& state, const Tensor& input_current, const LifConfig& cfg) {
  const auto n = state.membrane.size();
  if (input_current.size() != n)
    throw DimensionError("lif_step: input has " + std::to_string(input_current.size()) + " entries, layer has " +
                         std::to_string(n));
  if (!input_current.all_finite()) throw NumericError("lif_step: non-finite input current");
  Tensor spikes({n});
  lif_integrate(state.membrane.data(), state.thresholds.data(), input_current.data(), cfg, spikes.data());
  for (std::size_t i = 0; i < n; ++i) state.firing_counts[i] += spikes[i];
  ++state.steps_seen;
  return spikes;
}

Tensor firing_rate(const LifLayerState& state) {
  if (state.steps_seen == 0) throw EmptyWindowError("firing_rate: no steps recorded");
  Tensor r = state.firing_counts;
  const double t = static_cast<double>(state.steps_seen);
  for (auto& v : r.data()) v /= t;
  return r;
}

ChannelMask build_mask(std::size_t channels, double eta, RngStream& rng, bool prefix) {
  if (channels == 0) throw DimensionError("build_mask: channels must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("model.eta", "must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(std::floor(eta * static_cast<double>(channels)));
  if (k == 0)
    throw ConfigError("model.eta", "floor(eta * " + std::to_string(channels) + ") selects no adaptive channel");
  ChannelMask m{Tensor({channels}), eta};
  if (prefix) {
    for (std::size_t c = 0; c < k; ++c) m.bits[c] = 1.0;
    return m;
  }
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  std::vector<std::size_t> idx(channels);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.next_below(channels - i));
    std::swap(idx[i], idx[j]);
    m.bits[idx[i]] = 1.0;
  }
  return m;
}

Tensor adaptation_matrix(const ChannelMask& mask, const AdaptationConfig& cfg) {
  Tensor a({mask.channels()});
  for (std::size_t c = 0; c < mask.channels(); ++c) a[c] = mask.bits[c] != 0.0 ? cfg.gamma_mask : cfg.beta;
  return a;
}

Tensor update_thresholds(const Tensor& thresholds, const Tensor& a, const Tensor& rates_new,
                         const Tensor& rates_base, int sign) {
  const auto n = thresholds.size();
  if (a.size() != n || rates_new.size() != n || rates_base.size() != n)
    throw DimensionError("update_thresholds: all inputs must have " + std::to_string(n) + " channels");
  if (sign != 1 && sign != -1) throw ConfigError("model.threshold_update_sign", "must be +1 or -1");
  Tensor out = thresholds;
  for (std::size_t c = 0; c < n; ++c) out[c] += sign * a[c] * (rates_new[c] - rates_base[c]);
  return out;
}

Tensor aggregate_channel_rates(const Tensor& neuron_rates, std::span<const std::size_t> channel_of,
                               std::size_t channels) {
  if (channel_of.size() != neuron_rates.size())
    throw DimensionError("aggregate_channel_rates: channel map length mismatch");
  Tensor sum({channels});
  std::vector<std::size_t> count(channels, 0);
  for (std::size_t n = 0; n < channel_of.size(); ++n) {
    const auto c = channel_of[n];
    if (c >= channels) throw DimensionError("aggregate_channel_rates: channel index out of range");
    sum[c] += neuron_rates[n];
    ++count[c];
  }
  for (std::size_t c = 0; c < channels; ++c) {
    if (count[c] == 0) throw DimensionError("aggregate_channel_rates: channel " + std::to_string(c) + " is empty");
    sum[c] /= static_cast<double>(count[c]);
  }
  return sum;
}

void synaptic_current(const Tensor& weights, const Tensor& bias, std::span<const double> in, std::span<double> out) {
  const auto n_in = weights.rows();
  const auto n_out = weights.cols();
  if (in.size() != n_in || out.size() != n_out || bias.size() != n_out)
    throw DimensionError("synaptic_current: shape mismatch");
  std::copy(bias.data().begin(), bias.data().end(), out.begin());
  for (std::size_t i = 0; i < n_in; ++i) {
    const double x = in[i];
    if (x == 0.0) continue;
    const auto wrow = weights.row(i);
    for (std::size_t j = 0; j < n_out; ++j) out[j] += x * wrow[j];
  }
}

Tensor layer_forward(LifLayerState& state, const std::vector<Tensor>& inputs, const LifConfig& cfg) {
  if (inputs.empty()) throw DimensionError("layer_forward: need at least one time step");
  const auto in = state.inputs();
  const auto out = state.neurons();
  state.reset_membrane();
  Tensor raster({inputs.size(), out});
  Tensor current({out});
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (inputs[t].size() != in)
      throw DimensionError("layer_forward: step " + std::to_string(t) + " input has " +
                           std::to_string(inputs[t].size()) + " entries, expected " + std::to_string(in));
    synaptic_current(state.weights, state.bias, inputs[t].data(), current.data());
    const Tensor s = lif_step(state, current, cfg);
    std::copy(s.data().begin(), s.data().end(), raster.row(t).begin());
  }
  return raster;
}

}  // namespace safa
