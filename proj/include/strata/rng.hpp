#pragma once

#include <cstdint>
#include <initializer_list>

namespace strata {

// Deterministic counter-style PRNG built on the splitmix64 finalizer.
// Streams are derived by folding a label path into the seed, so any
// (task, strategy, rollout) tuple gets its own non-overlapping stream
// without coordination. Identical on every platform; no libc state.
struct Rng {
  uint64_t state = 0x9e3779b97f4a7c15ull;

  static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() {
    state += kGamma;
    return mix(state);
  }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n); n > 0. Modulo bias is < 2^-53 for the
  // small n used here, but use rejection anyway so draws are exact.
  uint64_t next_below(uint64_t n) {
    const uint64_t lim = ~uint64_t(0) - (~uint64_t(0) % n);
    uint64_t x;
    do { x = next_u64(); } while (x >= lim);
    return x % n;
  }
};

// Fold a path of labels into a root seed. Each component is mixed in
// with a distinct round so (a, b) and (b, a) land in different streams.
inline Rng derive_stream(uint64_t root, std::initializer_list<uint64_t> path) {
  uint64_t s = Rng::mix(root ^ 0x6a09e667f3bcc909ull);
  for (uint64_t c : path) {
    s = Rng::mix(s + Rng::kGamma);
    s = Rng::mix(s ^ Rng::mix(c + 0xbb67ae8584caa73bull));
  }
  Rng r;
  r.state = s;
  return r;
}

}  // namespace strata
