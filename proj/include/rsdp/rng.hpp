#pragma once
// Counter-based RNG (Philox4x32-10) plus the seed-derivation and distribution
// helpers used by every Monte Carlo driver in this library.  Counter-based
// generation is what makes results independent of the worker count: stream p
// is a pure function of (base_seed, tag, p).

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace rsdp {

struct Philox4x32 {
  // 10-round Philox with the reference multipliers and Weyl constants.
  static constexpr uint32_t M0 = 0xD2511F53u;
  static constexpr uint32_t M1 = 0xCD9E8D57u;
  static constexpr uint32_t W0 = 0x9E3779B9u;
  static constexpr uint32_t W1 = 0xBB67AE85u;

  static std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr,
                                       std::array<uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
      const uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
      const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
      const uint32_t lo0 = static_cast<uint32_t>(p0);
      const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
      const uint32_t lo1 = static_cast<uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += W0;
      key[1] += W1;
    }
    return ctr;
  }
};

inline uint64_t splitmix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Stream seed for (base_seed, tag, index).  Pure and stable across platforms;
// recorded in run manifests so any path can be replayed in isolation.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ fnv1a64(tag)) ^ index);
}

// Sequential view over one Philox stream.  Not thread-safe; one per path.
class Rng {
 public:
  explicit Rng(uint64_t seed)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)} {}

  uint32_t next_u32() {
    if (avail_ == 0) refill();
    return buf_[4 - avail_--];
  }

  uint64_t next_u64() {
    const uint64_t lo = next_u32();
    const uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on [0,1): 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * kInv53; }

  // Uniform on (0,1): offset by half an ulp of the 53-bit lattice, so logs
  // and Box-Muller never see an exact 0 or 1.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * kInv53;
  }

  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53

  void refill() {
    buf_ = Philox4x32::block(
        {static_cast<uint32_t>(counter_), static_cast<uint32_t>(counter_ >> 32), 0, 0},
        key_);
    ++counter_;
    avail_ = 4;
  }

  std::array<uint32_t, 2> key_;
  std::array<uint32_t, 4> buf_{};
  uint64_t counter_ = 0;
  int avail_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Compensated accumulator (Neumaier variant: exact when a new term swamps the
// running sum); reductions over paths use this in index order so the result
// does not depend on how work was scheduled.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      carry += (sum - t) + x;
    else
      carry += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

}  // namespace rsdp
