#include "safa/metrics.hpp"

#include <numeric>

#include "safa/errors.hpp"

namespace safa {

std::vector<double> SessionResults::accuracies() const {
  std::vector<double> a;
  for (const auto& s : sessions) a.push_back(s.accuracy);
  return a;
}

double session_accuracy(std::span<const long> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("session_accuracy: length mismatch");
  if (predictions.empty()) throw DimensionError("session_accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    correct += predictions[i] >= 0 && static_cast<std::size_t>(predictions[i]) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

AvgDelta avg_and_delta_last(std::span<const double> ours, double baseline_last) {
  if (ours.empty()) throw DimensionError("avg_and_delta_last: empty accuracy list");
  double sum = 0.0;
  for (double a : ours) sum += a;
  return {sum / static_cast<double>(ours.size()), ours.back() - baseline_last};
}

double harmonic_accuracy(double a_base, double a_new) {
  if (a_base < 0.0 || a_new < 0.0) throw DimensionError("harmonic_accuracy: accuracies must be non-negative");
  if (a_base + a_new == 0.0) return 0.0;
  return 2.0 * a_base * a_new / (a_base + a_new);
}

void finish_ratios(ConfusionBreakdown& b) {
  const auto n_new = b.mnn + b.cnn;
  const auto n_base = b.mbn + b.cbn;
  b.mbr = n_new ? std::optional(static_cast<double>(b.mnn) / static_cast<double>(n_new)) : std::nullopt;
  b.mar = n_base ? std::optional(static_cast<double>(b.mbn) / static_cast<double>(n_base)) : std::nullopt;
}

ConfusionBreakdown confusion_breakdown(std::span<const long> predictions, std::span<const std::size_t> labels,
                                       std::size_t base_classes) {
  if (predictions.size() != labels.size()) throw DimensionError("confusion_breakdown: length mismatch");
  if (base_classes == 0) throw DimensionError("confusion_breakdown: base class set is empty");
  ConfusionBreakdown b;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool hit = predictions[i] >= 0 && static_cast<std::size_t>(predictions[i]) == labels[i];
    if (labels[i] < base_classes)
      ++(hit ? b.cbn : b.mbn);
    else
      ++(hit ? b.cnn : b.mnn);
  }
  finish_ratios(b);
  return b;
}

SparsityReport sparsity_report(std::span<const double> spike_counts, std::span<const double> neuron_steps) {
  if (spike_counts.size() != neuron_steps.size()) throw DimensionError("sparsity_report: length mismatch");
  SparsityReport r;
  double spikes = 0.0, steps = 0.0;
  for (std::size_t l = 0; l < spike_counts.size(); ++l) {
    const double rate = neuron_steps[l] > 0.0 ? spike_counts[l] / neuron_steps[l] : 0.0;
    r.layer_rates.push_back(rate);
    r.layer_sparsity.push_back(1.0 - rate);
    spikes += spike_counts[l];
    steps += neuron_steps[l];
  }
  r.global_rate = steps > 0.0 ? spikes / steps : 0.0;
  r.global_sparsity = 1.0 - r.global_rate;
  return r;
}

}  // namespace safa
