#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safa/energy.hpp"
#include "safa/fscil.hpp"
#include "safa/metrics.hpp"

namespace safa {

inline constexpr const char* kResultsSchema = "safa-results/1";
inline constexpr const char* kArtifactVersion = "0.1.0";

struct ResultsDocument {
  std::string command;
  std::string config_text;  // canonical INI snapshot
  std::uint64_t fingerprint = 0;
  std::uint64_t seed = 0;
  std::optional<TrainLog> train;
  std::optional<double> readout_test_accuracy;
  SessionResults results;
  std::vector<std::uint64_t> weight_hashes;
  std::optional<EnergyReport> energy;
  std::vector<std::pair<std::string, double>> wall_clock_s;
};

// Pretty-printed JSON; wall-clock timings are left out when `canonical` is set
// so that reruns are byte-identical.
std::string results_json(const ResultsDocument& doc, bool canonical);

std::string energy_report_json(const EnergyReport& report);

// session,accuracy,hacc,mbr,mar,sparsity; absent values are empty cells.
void write_session_csv(std::ostream& os, const SessionResults& results);

// session,id,label,prediction,similarity for every scored query.
void write_predictions_csv(std::ostream& os, const std::vector<Evaluation>& evaluations);

}  // namespace safa
