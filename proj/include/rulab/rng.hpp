#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace rulab {

/// Philox4x32-10 block function: maps (counter, key) to four 32-bit words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                         std::array<std::uint32_t, 2> key);

/// Counter-based random stream. The 64-bit seed is the Philox key and the
/// stream id occupies the upper half of the counter, so every (seed, stream_id)
/// pair is an independent, reproducible sequence regardless of which thread
/// consumes it.
class RngStream {
public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Standard normal conditioned on |z| <= half_width.
  double truncated_normal(double half_width);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// 64-bit finalizer used to derive child seeds (splitmix64).
std::uint64_t mix64(std::uint64_t x);

}  // namespace rulab
