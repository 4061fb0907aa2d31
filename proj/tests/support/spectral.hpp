#pragma once

// Test-only spectral oracles, kept independent of the library's signal path:
// plain O(n^2) DFT evaluation and direct RMS sums.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;

// DFT magnitude at one frequency (Hz) of a real signal sampled at fs.
inline double dft_magnitude(const double* x, std::size_t n, double freq_hz, double fs) {
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    acc += x[t] * std::exp(std::complex<double>(0.0, -2.0 * kPi * freq_hz * double(t) / fs));
  return std::abs(acc);
}

// Frequency (among integer multiples of fs/n inside [lo, hi]) with the
// largest DFT magnitude.
inline double dominant_frequency(const double* x, std::size_t n, double lo_hz,
                                 double hi_hz, double fs) {
  const double bin_width = fs / double(n);
  double best_freq = lo_hz, best_mag = -1.0;
  for (std::size_t k = std::size_t(std::ceil(lo_hz / bin_width));
       k * bin_width <= hi_hz; ++k) {
    double mag = dft_magnitude(x, n, double(k) * bin_width, fs);
    if (mag > best_mag) {
      best_mag = mag;
      best_freq = double(k) * bin_width;
    }
  }
  return best_freq;
}

inline double rms(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) s += x[t] * x[t];
  return std::sqrt(s / double(n));
}

// Single-pass magnitude response of a filter via its impulse response: feed a
// unit impulse through `apply`, then take the DFT magnitude at f.
template <typename ApplyFn>
double impulse_response_magnitude(ApplyFn&& apply, std::size_t n, double f, double fs) {
  std::vector<double> impulse(n, 0.0);
  impulse[0] = 1.0;
  std::vector<double> response = apply(impulse);
  return dft_magnitude(response.data(), response.size(), f, fs);
}

}  // namespace oracle
