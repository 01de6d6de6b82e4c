#pragma once

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
// A draw is a pure function of (key, counter), so shot k of a run can be
// generated without generating shots 0..k-1.

#include <array>
#include <cstdint>

namespace mzx {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Uniform draws in [0,1) for one shot: key = seed, counter = (shot, draw index).
class ShotStream {
 public:
  constexpr ShotStream(std::uint64_t seed, std::uint64_t shot)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        shot_(shot) {}

  /// 53-bit uniform double for draw number `index` of this shot.
  constexpr double uniform(std::uint32_t index) const {
    const auto out = Philox4x32::block(
        {static_cast<std::uint32_t>(shot_), static_cast<std::uint32_t>(shot_ >> 32), index, 0}, key_);
    const std::uint64_t bits = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  double next() { return uniform(next_++); }

 private:
  Philox4x32::Key key_;
  std::uint64_t shot_;
  std::uint32_t next_ = 0;
};

}  // namespace mzx
