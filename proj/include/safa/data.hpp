#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "safa/rng.hpp"
#include "safa/tensor.hpp"

namespace safa {

struct Dataset {
  std::string name;
  std::size_t classes = 0;
  Tensor train_x;  // [n_train x D]
  std::vector<std::size_t> train_y;
  Tensor test_x;  // [n_test x D]
  std::vector<std::size_t> test_y;

  std::size_t feature_dim() const { return train_x.cols(); }
};

struct DatasetManifest {
  std::string name;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // training samples per class
  std::vector<std::string> files;   // train, test
  std::vector<std::string> checksums;
  std::string source;
};

struct SyntheticSpec {
  std::size_t classes = 20;
  std::size_t feature_dim = 16;
  double radius = 3.0;
  double stddev = 1.0;  // RMS distance from the class mean (per-coordinate sd is stddev / sqrt(D))
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t base_classes = 10;
  std::size_t sessions = 5;
  std::size_t way = 2;
  std::size_t shot = 5;

  void validate() const;
};

// One protocol stage. Class ids are stream-local: the base session owns
// 0..B-1 and incremental session s owns the next N ids.
struct Session {
  std::vector<std::size_t> classes;
  std::vector<std::size_t> train;  // indices into Dataset::train_x
  std::vector<std::size_t> test;   // indices into Dataset::test_x
};

struct FscilStream {
  Dataset data;  // labels remapped to stream-local ids
  std::vector<std::size_t> original_class;  // stream-local id -> dataset class id
  Session base;
  std::vector<Session> incremental;
  std::size_t way = 0;
  std::size_t shot = 0;
  std::uint64_t seed = 0;

  std::size_t seen_classes(std::size_t session) const;
};

Dataset gen_synthetic_dataset(const SyntheticSpec& spec, RngStream& rng);

// Synthetic data from the data stream plus splits from the split stream of `seed`.
FscilStream gen_synthetic_stream(const SyntheticSpec& spec, std::uint64_t seed, DatasetManifest* manifest = nullptr,
                                 bool index_order = false);

FscilStream build_splits(const Dataset& dataset, std::size_t base_classes, std::size_t sessions, std::size_t way,
                         std::size_t shot, RngStream& rng, bool index_order = false);

// Throws ProtocolError on overlapping sessions or malformed support sets.
void validate_stream(const FscilStream& stream);

// Flat binary sample files: 16-byte magic, u32 version/count/dim/label width,
// (u32 label, dim x f32) records, then a trailing FNV-1a-64 of every byte
// before it. All integers little-endian.
std::uint64_t write_flat_file(const std::filesystem::path& path, const Tensor& x, const std::vector<std::size_t>& y);
std::vector<std::uint8_t> encode_flat(const Tensor& x, const std::vector<std::size_t>& y);
void decode_flat(const std::vector<std::uint8_t>& bytes, Tensor& x, std::vector<std::size_t>& y,
                 std::uint64_t* checksum = nullptr);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Writes train/test flat files next to the manifest and returns the manifest.
DatasetManifest save_flat_dataset(const std::filesystem::path& manifest_path, const Dataset& dataset);

// Loads both splits, verifies checksums against the manifest and rescales
// features to [0, 1] (min-max over all samples) unless they already lie there.
Dataset load_flat_dataset(const std::filesystem::path& manifest_path);

}  // namespace safa
