#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "safa/lif.hpp"
#include "safa/rng.hpp"
#include "safa/tensor.hpp"
#include "safa/zo.hpp"

namespace safa {

// Forward behaviour of hidden neurons. `identity` replaces the spike by the
// pre-spike membrane and disables reset, leaving a smooth network.
enum class SpikeFunction { heaviside, identity };

// Local derivative used for dS/dU during the reverse pass.
enum class SpikeDerivative { zeroth_order, gaussian_surrogate, sigmoid_surrogate };

enum class MseTarget { softmax, raw_membrane };

struct LossConfig {
  double lambda = 0.05;
  std::size_t timesteps = 4;
  MseTarget mse_target = MseTarget::softmax;

  void validate() const;
};

struct NetworkConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t classes = 10;
  LifConfig lif;
  double eta = 0.5;
  bool prefix_mask = false;
  // Weights start uniform in +-init_scale/sqrt(fan_in).
  double init_scale = 1.0;

  void validate() const;
};

// Stack of dense LIF layers feeding a non-spiking leaky readout whose
// membrane u_t serves as the logits at every step:
//   u_t = tau * u_{t-1} + s_t W_out + b_out.
// The input vector is presented as a constant current at every step.
struct SpikingNetwork {
  std::vector<LifLayerState> hidden;
  Tensor readout_weights;  // [last hidden x classes]
  Tensor readout_bias;     // [classes]
  LifConfig lif;
  SpikeFunction spike = SpikeFunction::heaviside;

  static SpikingNetwork create(const NetworkConfig& cfg, RngStream& init_rng, RngStream& mask_rng);

  std::size_t input_dim() const { return hidden.front().inputs(); }
  std::size_t feature_dim() const { return hidden.back().neurons(); }
  std::size_t classes() const { return readout_weights.cols(); }

  // Trainable tensors in canonical order: (W, b) per hidden layer, then readout.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

struct LayerTrace {
  Tensor gap;     // [T x out], pre-spike membrane minus threshold
  Tensor spikes;  // [T x out]
};

struct SampleTrace {
  Tensor input;  // [D]
  std::size_t label = 0;
  std::vector<LayerTrace> layers;
  Tensor readout;  // [T x classes]
  Tensor dloss;    // [T x classes], gradient of the batch loss wrt readout
  double loss = 0.0;
};

// Record of one batched forward pass; backward() walks it in reverse.
struct BackpropTape {
  std::vector<SampleTrace> samples;
  LossConfig loss;
  double loss_value = 0.0;
  bool complete = false;
};

SampleTrace forward_sample(const SpikingNetwork& net, std::span<const double> x, std::size_t timesteps);

// Per-sample loss with its gradient with respect to the readout trace.
double sample_loss(const Tensor& readout, std::size_t label, const LossConfig& cfg, Tensor* grad);

BackpropTape record_forward(const SpikingNetwork& net, const Tensor& inputs, std::span<const std::size_t> labels,
                            const LossConfig& cfg);

// Recomputes every sample of the tape and reports whether it matches bit for bit.
bool replay_matches(const SpikingNetwork& net, const BackpropTape& tape);

struct BackwardOptions {
  SpikeDerivative derivative = SpikeDerivative::zeroth_order;
  double sigmoid_k = 4.0;
};

// Gradients aligned with net.parameters(). Reset paths are detached, so the
// membrane recurrence carries tau*(1 - S_t) under reset-to-zero and tau under
// reset-by-subtraction. The zeroth-order derivative draws fresh samples for
// every neuron at every step, in (sample, layer descending, step descending,
// neuron) order.
std::vector<Tensor> backward(const SpikingNetwork& net, const BackpropTape& tape, const ZoConfig& zo, RngStream& rng,
                             const BackwardOptions& opts = {});

// Time-averaged spike rates of the last hidden layer.
Tensor features(const SampleTrace& trace);

// Layer-by-layer mean firing rate of a single trace.
std::vector<double> layer_rates(const SampleTrace& trace);

}  // namespace safa
