#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ssvep/dataio.hpp"
#include "ssvep/matrix.hpp"

namespace ssvep {
namespace dsp {

// Second-order IIR section, coefficients normalized to a0 = 1.
struct Biquad {
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};

  bool stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }
};

struct BiquadCascade {
  std::vector<Biquad> sections;

  std::size_t total_order() const { return 2 * sections.size(); }
  bool stable() const;
  // Complex magnitude response at f (Hz) for sampling rate fs.
  double magnitude(double f, double fs) const;
};

// Butterworth designs via bilinear transform, realized as stable biquads
// with unit passband gain.
BiquadCascade design_lowpass(double cutoff_hz, std::size_t order, double fs);
BiquadCascade design_bandpass(double lo_hz, double hi_hz, std::size_t order, double fs);
// Single-biquad notch with unit gain at DC and Nyquist.
BiquadCascade design_notch(double f0_hz, double fs, double q);

// Single forward pass, zero initial state, row-wise.
Matrix filter_forward(const BiquadCascade& f, const Matrix& x);

// Edge extension for zero-phase filtering. Both modes are linear in the
// input. Periodic extension continues any whole-cycle component exactly,
// which a narrow notch needs on short trials.
enum class PadMode { Reflect, Periodic };

// Zero-phase forward-backward pass; default pad is 3 * total_order samples
// at each end, pad_samples overrides (narrow notches ring longer than 3x
// their order).
Matrix filtfilt(const BiquadCascade& f, const Matrix& x, std::size_t pad_samples = 0,
                PadMode mode = PadMode::Reflect);

// Anti-aliased half-rate decimation: zero-phase 8th-order Butterworth lowpass
// at 0.8x the new Nyquist, then every second sample.
std::pair<Matrix, double> decimate_by_2(const Matrix& x, double fs);

// Subtract the reference row from every other row, then drop it.
Matrix rereference(const Matrix& x, std::size_t reference_row);

struct PreprocessConfig {
  double notch_hz{50.0};
  double notch_q{30.0};
  double band_lo_hz{9.0};
  double band_hi_hz{100.0};
  std::size_t band_order{4};
};

// Baseline chain: decimate to half rate, re-reference (against the stored
// reference row, or a zero row when the montage carries none), notch, then
// bandpass. Output trials hold the data channels only.
Trial preprocess_trial(const Trial& t, const Montage& montage,
                       const PreprocessConfig& cfg = {});
Dataset preprocess_dataset(const Dataset& ds, const PreprocessConfig& cfg = {});

}  // namespace dsp
}  // namespace ssvep
