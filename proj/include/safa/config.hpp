#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "safa/data.hpp"
#include "safa/fscil.hpp"

namespace safa {

enum class DatasetKind { synthetic, flat };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::string manifest;  // flat datasets only
  SyntheticSpec synthetic;
  bool index_order = false;
};

// Everything one experiment needs. Loaded from an INI-style file with the
// sections [dataset] [model] [optimizer] [zo] [fscil] [run]; unknown sections
// or keys are rejected.
struct ExperimentConfig {
  DatasetConfig dataset;
  NetworkConfig network;
  TrainConfig train;
  FscilConfig fscil;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending "section.key".
  void validate() const;

  FscilExperiment experiment() const;

  // Canonical INI rendering of every field; parse_config(canonical_text())
  // yields an identical config.
  std::string canonical_text() const;

  // Hash of the fields a trained checkpoint depends on. Incremental-only
  // settings (alpha, threshold adaptation) are excluded so a single base
  // checkpoint can serve several incremental configurations.
  std::uint64_t fingerprint() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies "section.key=value" on top of an existing config.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Synthetic stream, or flat dataset split with the split stream of the seed.
FscilStream make_stream(const ExperimentConfig& cfg);

}  // namespace safa
