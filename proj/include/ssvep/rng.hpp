#pragma once

#include <cmath>
#include <cstdint>

namespace ssvep {

// Counter-based generator used everywhere randomness is needed. Output i is
// a pure function of (seed, stream, i), so identical configs reproduce
// bit-identical values on any platform. Independent substreams are derived
// by hashing tag words into the stream id, which lets trials, folds and
// dropout layers each own a generator without coordination.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(seed + 0x632be59bd9b4e019ULL) ^ mix(stream)) {}

  static CounterRng derive(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t stream = mix(a + 0x9e3779b97f4a7c15ULL);
    stream = mix(stream ^ (b + 0xbf58476d1ce4e5b9ULL));
    stream = mix(stream ^ (c + 0x94d049bb133111ebULL));
    return CounterRng(seed, stream);
  }

  std::uint64_t next_u64() { return mix(base_ + (counter_++) * kGamma); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Plain modulo; the bias is negligible for the
  // small n used here and the mapping stays platform-independent.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ssvep
