#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "safa/rng.hpp"
#include "safa/tensor.hpp"

namespace safa {

enum class ResetMode { to_zero, by_subtraction };

struct LifConfig {
  double tau = 0.5;
  double theta_init = 1.0;
  ResetMode reset = ResetMode::to_zero;
  // Constant the membrane is set to after a spike under ResetMode::to_zero.
  double u_reset = 0.0;

  void validate() const;
};

// Binary per-channel selector; bits[c] == 1 marks an adaptive channel.
struct ChannelMask {
  Tensor bits;
  double eta = 0.0;

  std::size_t channels() const { return bits.size(); }
  std::size_t active() const;
};

struct AdaptationConfig {
  double beta = 1.2;
  double gamma_mask = 0.01;
  int passes = 3;

  void validate() const;
};

struct FiringStats {
  Tensor base_rates;
  Tensor new_rates;
};

// One dense layer of LIF neurons. Each neuron is its own channel.
struct LifLayerState {
  Tensor weights;  // [in x out]
  Tensor bias;     // [out]
  Tensor membrane;
  Tensor thresholds;
  Tensor firing_counts;
  std::size_t steps_seen = 0;
  ChannelMask mask;

  static LifLayerState create(std::size_t in, std::size_t out, const LifConfig& cfg, ChannelMask mask);

  std::size_t inputs() const { return weights.rows(); }
  std::size_t neurons() const { return weights.cols(); }
  void reset_membrane();
  void reset_statistics();
};

// Shared integrate/fire/reset kernel. `current` is the synaptic input for
// this step; `gap` (optional) receives the pre-spike membrane minus threshold.
void lif_integrate(std::span<double> membrane, std::span<const double> thresholds,
                   std::span<const double> current, const LifConfig& cfg, std::span<double> spikes,
                   std::span<double> gap = {});

Tensor lif_step(LifLayerState& state, const Tensor& input_current, const LifConfig& cfg);

Tensor firing_rate(const LifLayerState& state);

// Adaptive channels are drawn uniformly without replacement. With
// `prefix` set, the first floor(eta * channels) channels are selected instead.
ChannelMask build_mask(std::size_t channels, double eta, RngStream& rng, bool prefix = false);

// Diagonal of beta*(I - M) + gamma*M.
Tensor adaptation_matrix(const ChannelMask& mask, const AdaptationConfig& cfg);

// theta - a * (rates_new - rates_base) for sign = -1 (the default);
// sign = +1 flips the direction of the correction.
Tensor update_thresholds(const Tensor& thresholds, const Tensor& a, const Tensor& rates_new,
                         const Tensor& rates_base, int sign = -1);

// Mean of member-neuron rates per channel; `channel_of[n]` names the channel
// that neuron n belongs to.
Tensor aggregate_channel_rates(const Tensor& neuron_rates, std::span<const std::size_t> channel_of,
                               std::size_t channels);

// out = in * W + b, accumulated over inputs in index order.
void synaptic_current(const Tensor& weights, const Tensor& bias, std::span<const double> in, std::span<double> out);

// Runs a full spike sequence: the membrane starts at zero, step t receives
// inputs[t] * W + b. Returns the [T x neurons] raster.
Tensor layer_forward(LifLayerState& state, const std::vector<Tensor>& inputs, const LifConfig& cfg);

}  // namespace safa
