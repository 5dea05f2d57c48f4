#pragma once

#include <array>
#include <cstdint>

#include "safa/tensor.hpp"

namespace safa {

// Fixed stream ids used when deriving module streams from one master seed.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kMask = 2;
inline constexpr std::uint64_t kZo = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kSplit = 5;
}  // namespace streams

// Counter-based generator (Philox4x32-10). Draw i of a stream is a pure
// function of (seed, stream_id, i); each draw consumes one 128-bit block.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double next_uniform();
  double next_normal();
  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  // Child stream with a derived stream id; the parent is not advanced.
  RngStream fork(std::uint64_t child_id) const;

  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

 private:
  std::array<std::uint32_t, 4> block();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

Tensor gaussian_sample(RngStream& rng, std::size_t n);

}  // namespace safa
