#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace safa {

struct ConfusionBreakdown {
  std::size_t cbn = 0;  // base samples classified correctly
  std::size_t mbn = 0;  // base samples misclassified
  std::size_t mnn = 0;  // new samples misclassified
  std::size_t cnn = 0;  // new samples classified correctly
  // Fraction of new-class samples misclassified; absent without new samples.
  std::optional<double> mbr;
  // Fraction of base-class samples misclassified. Written as "MNR" in some
  // sources for the same quantity.
  std::optional<double> mar;
};

struct SessionMetrics {
  std::size_t session = 0;
  std::size_t classes_seen = 0;
  std::size_t samples = 0;
  double accuracy = 0.0;
  double base_accuracy = 0.0;
  std::optional<double> novel_accuracy;
  std::optional<double> hacc;
  ConfusionBreakdown breakdown;
  std::vector<double> layer_rates;  // mean firing rate per hidden layer
  double mean_rate = 0.0;           // spike-weighted over all hidden neurons
  std::size_t abstained = 0;        // queries with an all-zero feature vector
};

struct SessionResults {
  std::vector<SessionMetrics> sessions;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t seed = 0;

  std::vector<double> accuracies() const;
};

double session_accuracy(std::span<const long> predictions, std::span<const std::size_t> labels);

struct AvgDelta {
  double avg;
  double delta_last;
};
AvgDelta avg_and_delta_last(std::span<const double> ours, double baseline_last);

// 2ab/(a+b), defined as 0 when both are 0.
double harmonic_accuracy(double a_base, double a_new);

// Labels below `base_classes` are base classes. A prediction of -1 counts as
// a miss.
ConfusionBreakdown confusion_breakdown(std::span<const long> predictions, std::span<const std::size_t> labels,
                                       std::size_t base_classes);

// Fills the optional ratios from the counts.
void finish_ratios(ConfusionBreakdown& b);

struct SparsityReport {
  std::vector<double> layer_rates;
  std::vector<double> layer_sparsity;
  double global_rate = 0.0;
  double global_sparsity = 1.0;
};

// `spike_counts[l]` is the total number of spikes layer l emitted over
// `neuron_steps[l]` neuron-steps.
SparsityReport sparsity_report(std::span<const double> spike_counts, std::span<const double> neuron_steps);

}  // namespace safa
