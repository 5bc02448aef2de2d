#pragma once

// Counter-based random streams (Philox4x32-10, Salmon et al. 2011).
//
// A stream is identified by (key, stream id). The 128-bit counter is split
// into a 64-bit block index (low words) and the 64-bit stream id (high
// words), so streams derived from the same root key never overlap.

#include "hmc_lab/core.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace hmc_lab {

namespace philox {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Block round(const Block& ctr, const Key& key) {
  const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
  const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

/// Ten-round Philox bijection of `ctr` under `key`.
constexpr Block philox4x32_10(Block ctr, Key key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    ctr = round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

/// Sequential view over one counter-based stream.
///
/// Satisfies UniformRandomBitGenerator so it can drive <random> adaptors,
/// but the library itself only uses uniform() and normal(), which are
/// implemented here so results do not depend on the standard library.
class Stream {
public:
  using result_type = std::uint64_t;

  Stream() : Stream(0, 0) {}
  Stream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_id_(stream_id),
        key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  result_type operator()() {
    if (lane_ == 2) refill();
    return buffer_[lane_++];
  }

  /// Uniform double in (0, 1): 53 random bits, never exactly 0.
  double uniform() {
    const std::uint64_t bits = (*this)() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Eigen::Index d) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  /// Uniform direction on the unit sphere in dimension d.
  Vector unit_vector(Eigen::Index d) {
    for (;;) {
      Vector v = normal_vector(d);
      const double n = v.norm();
      if (n > 1e-300) return v / n;
    }
  }

  /// Uniform point in the ball of the given radius.
  Vector in_ball(Eigen::Index d, double radius) {
    Vector dir = unit_vector(d);
    return radius * std::pow(uniform(), 1.0 / static_cast<double>(d)) * dir;
  }

  /// Draws an index with probability proportional to weights[i].
  template <typename Weights>
  std::size_t categorical(const Weights& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last_positive = i;
      acc += weights[i];
      if (u < acc) return i;
    }
    return last_positive;
  }

private:
  void refill() {
    const philox::Block ctr{static_cast<std::uint32_t>(block_),
                            static_cast<std::uint32_t>(block_ >> 32),
                            static_cast<std::uint32_t>(stream_id_),
                            static_cast<std::uint32_t>(stream_id_ >> 32)};
    const philox::Block out = philox::philox4x32_10(ctr, key_);
    buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
    ++block_;
    lane_ = 0;
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  philox::Key key_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int lane_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Independent stream k derived from a root seed.
inline Stream split(std::uint64_t root_seed, std::uint64_t k) { return Stream(root_seed, k); }

/// Derives a child root seed from (root, salt) so nested fan-outs get
/// distinct key spaces.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
  const philox::Block out = philox::philox4x32_10(
      {static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32), 0x5EEDu, 0u},
      {static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32)});
  return (std::uint64_t{out[1]} << 32) | out[0];
}

}  // namespace hmc_lab
