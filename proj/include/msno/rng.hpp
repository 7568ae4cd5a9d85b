#pragma once

#include <cstdint>
#include <cmath>

namespace msno {

// Counter-based generator (Philox4x32-10). A draw is a pure function of
// (seed, stream, counter), so independent streams can be consumed in any
// order and still reproduce bit-for-bit.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  // k-th uniform in [0, 1) of this stream.
  double uniform(uint64_t k) const {
    uint64_t bits = word(k);
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  // k-th standard normal (Box-Muller on draws 2k, 2k+1).
  double normal(uint64_t k) const {
    double u1 = uniform(2 * k);
    double u2 = uniform(2 * k + 1);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  uint64_t word(uint64_t counter) const {
    uint32_t c[4] = {static_cast<uint32_t>(counter), static_cast<uint32_t>(counter >> 32),
                     static_cast<uint32_t>(stream_), static_cast<uint32_t>(stream_ >> 32)};
    uint32_t key[2] = {static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)};
    for (int round = 0; round < 10; ++round) {
      uint64_t p0 = 0xD2511F53ULL * c[0];
      uint64_t p1 = 0xCD9E8D57ULL * c[2];
      uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
      uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
      uint32_t n0 = hi1 ^ c[1] ^ key[0];
      uint32_t n2 = hi0 ^ c[3] ^ key[1];
      c[0] = n0; c[1] = lo1; c[2] = n2; c[3] = lo0;
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return (static_cast<uint64_t>(c[0]) << 32) | c[1];
  }

 private:
  uint64_t seed_;
  uint64_t stream_;
};

}  // namespace msno
