#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safa/data.hpp"
#include "safa/energy.hpp"
#include "safa/lif.hpp"
#include "safa/metrics.hpp"
#include "safa/network.hpp"
#include "safa/tensor.hpp"
#include "safa/zo.hpp"

namespace safa {

// Normalized prototype rows and the base-subspace projector. Base rows come
// first in the classifier, followed by one fused row per novel class in
// arrival order; fused rows never change after they are added.
struct PrototypeBank {
  Tensor base;       // [B x D], unit rows
  Tensor projector;  // [D x D]
  double alpha = 0.5;
  std::vector<Tensor> novel;      // unit rows before fusion
  std::vector<Tensor> fused_raw;  // (1 - alpha) c + alpha c G
  std::vector<Tensor> fused;      // fused_raw scaled to unit norm

  std::size_t classes() const { return base.rows() + fused.size(); }
  std::size_t feature_dim() const { return base.cols(); }
  Tensor classifier() const;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 128;
  double lr = 0.001;
  LossConfig loss;
  ZoConfig zo;
  BackwardOptions backward;
  double rate_ema = 0.9;

  void validate() const;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;  // readout accuracy over the final epoch
};

struct ModelCheckpoint {
  SpikingNetwork net;
  std::vector<Tensor> base_rates;  // per hidden layer, per neuron
  PrototypeBank bank;
  std::size_t timesteps = 4;
  std::size_t session = 0;
  std::uint64_t fingerprint = 0;
  std::string config_snapshot;
};

// Mini-batch Adam on the base session with zeroth-order spike derivatives.
// Base firing rates are tracked as an exponential moving average over the
// batches of the final epoch. `shuffle_rng` orders the batches; `zo_rng`
// feeds the estimator.
TrainLog train_base(SpikingNetwork& net, const Tensor& x, std::span<const std::size_t> labels, const TrainConfig& cfg,
                    RngStream& shuffle_rng, RngStream& zo_rng, std::vector<Tensor>* base_rates);

// Top-1 accuracy of the trained readout head (argmax of the time-averaged
// readout membrane) on the given rows.
double readout_accuracy(const SpikingNetwork& net, std::size_t timesteps, const Tensor& x,
                        std::span<const std::size_t> labels, std::span<const std::size_t> rows);

// Per-class mean of feature rows followed by L2 normalization; rows follow
// the order of `classes`.
Tensor prototypes_from_features(const Tensor& features, std::span<const std::size_t> labels,
                                std::span<const std::size_t> classes);

Tensor extract_prototypes(const SpikingNetwork& net, std::size_t timesteps, const Tensor& x,
                          std::span<const std::size_t> labels, std::span<const std::size_t> classes);

// Orthogonal projector onto the row space of `base`:
//   G = B^T (B B^T + jitter I)^-1 B.
// This is the D x D form; the B x B product B (B^T B)^-1 B^T cannot act on
// D-dimensional prototypes and B^T B is singular whenever B < D.
Tensor base_projector(const Tensor& base, double jitter = 0.0);

// (1 - alpha) C + alpha C G per row, then unit-normalized. `first_class`
// labels the rows in error messages; `raw` receives the pre-normalized rows.
Tensor fuse_prototypes(const Tensor& novel, const Tensor& projector, double alpha, std::size_t first_class = 0,
                       Tensor* raw = nullptr);

// sign = +1 raises the threshold of neurons that fire above their base rate,
// pulling support-set rates back toward the base rates.
struct ThresholdPolicy {
  AdaptationConfig adapt;
  int sign = 1;
  std::optional<double> floor = 0.01;
};

// Mean firing rate per neuron of every hidden layer over a sample set.
std::vector<Tensor> mean_layer_rates(const SpikingNetwork& net, std::size_t timesteps, const Tensor& x,
                                     std::span<const std::size_t> rows = {});

// Runs `passes` rounds of: measure support rates, apply the threshold rule
// per layer, clamp to the floor. Weights are not touched. Returns the mean
// |r_new - r_base| over stable channels, measured before each pass and once
// after the last (passes + 1 entries).
std::vector<double> adapt_thresholds_incremental(SpikingNetwork& net, std::size_t timesteps,
                                                 const std::vector<Tensor>& base_rates, const Tensor& support,
                                                 const ThresholdPolicy& policy);

struct Classification {
  long label;
  double similarity;
};

// Highest cosine similarity wins; ties go to the lowest row index.
Classification classify(std::span<const double> feature, const Tensor& classifier);

struct Evaluation {
  std::vector<std::size_t> sample_ids;
  std::vector<std::size_t> labels;
  std::vector<long> predictions;
  std::vector<double> similarity;
  SessionMetrics metrics;
  std::vector<double> spikes_per_layer;
  std::vector<double> neuron_steps_per_layer;
};

// Scores the given test rows in order. Queries whose feature vector is all
// zero cannot be ranked by cosine similarity and are recorded as abstentions
// (prediction -1).
Evaluation evaluate(const SpikingNetwork& net, std::size_t timesteps, const PrototypeBank& bank, const Tensor& x,
                    std::span<const std::size_t> labels, std::span<const std::size_t> rows, std::size_t base_classes);

struct FscilConfig {
  double alpha = 0.5;
  ThresholdPolicy thresholds;
  double projector_jitter = 0.0;
};

struct RunOutput {
  SessionResults results;
  ModelCheckpoint final_state;
  std::vector<Evaluation> evaluations;
  std::vector<std::uint64_t> weight_hashes;  // one per session, after it ran
  std::vector<LayerCostProfile> energy_profiles;
};

// Base prototypes and projector from a trained network; session 0 state.
void finish_base_session(ModelCheckpoint& ckpt, const FscilStream& stream, double alpha, double jitter);

// Evaluates session 0, then for each incremental session: extract the novel
// prototypes from the support set, adapt thresholds on it, fuse the
// prototypes, and evaluate on every seen class.
RunOutput run_incremental(ModelCheckpoint ckpt, const FscilStream& stream, const FscilConfig& cfg);

std::uint64_t weights_hash(const SpikingNetwork& net);

struct FscilExperiment {
  NetworkConfig network;
  TrainConfig train;
  FscilConfig fscil;
  std::uint64_t seed = 0;
};

// Builds the network from the init/mask streams, trains it on the base
// session and extracts the base prototypes.
ModelCheckpoint train_base_checkpoint(const FscilStream& stream, const FscilExperiment& exp, TrainLog* log = nullptr);

// train_base_checkpoint followed by run_incremental. Gradients are only
// computed in the base session.
RunOutput run_fscil(const FscilStream& stream, const FscilExperiment& exp);

}  // namespace safa
