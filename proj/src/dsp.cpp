#include "ssvep/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "ssvep/errors.hpp"

namespace ssvep {
namespace dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;
using cd = std::complex<double>;

// Biquad with conjugate pole pair p and zeros z1, z2 (all in the z-plane).
Biquad biquad_from_roots(cd pole, cd zero1, cd zero2) {
  Biquad s;
  s.a1 = -2.0 * pole.real();
  s.a2 = std::norm(pole);
  s.b0 = 1.0;
  s.b1 = -(zero1 + zero2).real();
  s.b2 = (zero1 * zero2).real();
  return s;
}

cd bilinear(cd s_pole, double fs) {
  return (2.0 * fs + s_pole) / (2.0 * fs - s_pole);
}

cd response_at(const Biquad& s, cd z_inv) {
  return (s.b0 + s.b1 * z_inv + s.b2 * z_inv * z_inv) /
         (1.0 + s.a1 * z_inv + s.a2 * z_inv * z_inv);
}

void check_stability(const BiquadCascade& c, const char* what) {
  if (!c.stable())
    throw NumericalError(std::string(what) + ": designed cascade has an unstable section");
}

}  // namespace

bool BiquadCascade::stable() const {
  return std::all_of(sections.begin(), sections.end(),
                     [](const Biquad& s) { return s.stable(); });
}

double BiquadCascade::magnitude(double f, double fs) const {
  cd z_inv = std::exp(cd(0.0, -2.0 * kPi * f / fs));
  cd h(1.0, 0.0);
  for (const Biquad& s : sections) h *= response_at(s, z_inv);
  return std::abs(h);
}

BiquadCascade design_lowpass(double cutoff_hz, std::size_t order, double fs) {
  if (cutoff_hz <= 0.0 || cutoff_hz >= fs / 2.0)
    throw ConfigError("design_lowpass: cutoff must lie in (0, Nyquist)");
  if (order == 0 || order % 2 != 0)
    throw ConfigError("design_lowpass: order must be a positive even integer");

  double warped = 2.0 * fs * std::tan(kPi * cutoff_hz / fs);
  BiquadCascade cascade;
  for (std::size_t k = 0; k < order / 2; ++k) {
    double theta = kPi * (2.0 * double(k) + 1.0 + double(order)) / (2.0 * double(order));
    cd pole_s = warped * std::exp(cd(0.0, theta));  // upper-half-plane pole
    cd pole_z = bilinear(pole_s, fs);
    Biquad s = biquad_from_roots(pole_z, cd(-1.0, 0.0), cd(-1.0, 0.0));
    // Unit DC gain per section.
    double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    s.b0 /= dc;
    s.b1 /= dc;
    s.b2 /= dc;
    cascade.sections.push_back(s);
  }
  check_stability(cascade, "design_lowpass");
  return cascade;
}

BiquadCascade design_bandpass(double lo_hz, double hi_hz, std::size_t order, double fs) {
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < fs / 2.0))
    throw ConfigError("design_bandpass: need 0 < lo < hi < Nyquist");
  if (order == 0 || order % 2 != 0)
    throw ConfigError("design_bandpass: order must be a positive even integer");

  const std::size_t proto_order = order / 2;
  const double w1 = 2.0 * fs * std::tan(kPi * lo_hz / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * hi_hz / fs);
  const double w0_sq = w1 * w2;
  const double bw = w2 - w1;

  // Expand each unit lowpass prototype pole p through s^2 - (bw p) s + w0^2 = 0;
  // taking prototype poles with non-negative imaginary part covers the full
  // set once conjugates are added per section.
  std::vector<cd> poles_s;
  for (std::size_t k = 0; k < proto_order; ++k) {
    double theta =
        kPi * (2.0 * double(k) + 1.0 + double(proto_order)) / (2.0 * double(proto_order));
    cd p = std::exp(cd(0.0, theta));
    if (p.imag() < -1e-12) continue;
    cd bp = bw * p;
    cd disc = std::sqrt(bp * bp - 4.0 * w0_sq);
    cd r1 = (bp + disc) / 2.0;
    cd r2 = (bp - disc) / 2.0;
    if (p.imag() > 1e-12) {
      poles_s.push_back(r1);
      poles_s.push_back(r2);
    } else {
      // Real prototype pole: r1 and r2 are already a conjugate pair.
      poles_s.push_back(r1.imag() >= 0.0 ? r1 : r2);
    }
  }

  BiquadCascade cascade;
  for (cd ps : poles_s) {
    cd pz = bilinear(ps, fs);
    // One zero at DC and one at Nyquist per section.
    cascade.sections.push_back(biquad_from_roots(pz, cd(1.0, 0.0), cd(-1.0, 0.0)));
  }

  // Normalize overall gain at the geometric band center.
  double fc = std::sqrt(lo_hz * hi_hz);
  double g = cascade.magnitude(fc, fs);
  if (g <= 0.0) throw NumericalError("design_bandpass: degenerate center response");
  double per_section = std::pow(1.0 / g, 1.0 / double(cascade.sections.size()));
  for (Biquad& s : cascade.sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  check_stability(cascade, "design_bandpass");
  return cascade;
}

BiquadCascade design_notch(double f0_hz, double fs, double q) {
  if (f0_hz <= 0.0 || f0_hz >= fs / 2.0)
    throw ConfigError("design_notch: center must lie in (0, Nyquist)");
  if (q <= 0.0) throw ConfigError("design_notch: q must be positive");

  double w0 = 2.0 * kPi * f0_hz / fs;
  double alpha = std::sin(w0) / (2.0 * q);
  double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  BiquadCascade cascade;
  cascade.sections.push_back(s);
  check_stability(cascade, "design_notch");
  return cascade;
}

namespace {

// Direct form II transposed. steady_init seeds the state as if the first
// sample had been applied forever, which suppresses step transients at the
// pad boundary; the plain forward pass keeps a zero (rest) state.
void run_section_inplace(const Biquad& s, double* x, std::size_t n, bool steady_init) {
  double s1 = 0.0, s2 = 0.0;
  if (steady_init && n > 0) {
    double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    s1 = (dc - s.b0) * x[0];
    s2 = (s.b2 - s.a2 * dc) * x[0];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double y = s.b0 * x[i] + s1;
    s1 = s.b1 * x[i] - s.a1 * y + s2;
    s2 = s.b2 * x[i] - s.a2 * y;
    x[i] = y;
  }
}

}  // namespace

Matrix filter_forward(const BiquadCascade& f, const Matrix& x) {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (const Biquad& s : f.sections) run_section_inplace(s, out.row(r), out.cols, false);
  return out;
}

Matrix filtfilt(const BiquadCascade& f, const Matrix& x, std::size_t pad_samples,
                PadMode mode) {
  const std::size_t pad = pad_samples > 0 ? pad_samples : 3 * f.total_order();
  if (x.cols <= pad)
    throw ConfigError("filtfilt: input length " + std::to_string(x.cols) +
                      " must exceed the pad length (" + std::to_string(pad) + ")");

  Matrix out(x.rows, x.cols);
  std::vector<double> buf(x.cols + 2 * pad);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* src = x.row(r);
    if (mode == PadMode::Reflect) {
      // Odd reflection keeps both value and trend continuous at the edges.
      for (std::size_t i = 0; i < pad; ++i) buf[i] = 2.0 * src[0] - src[pad - i];
      for (std::size_t i = 0; i < pad; ++i)
        buf[pad + x.cols + i] = 2.0 * src[x.cols - 1] - src[x.cols - 2 - i];
    } else {
      for (std::size_t i = 0; i < pad; ++i) buf[i] = src[x.cols - pad + i];
      for (std::size_t i = 0; i < pad; ++i) buf[pad + x.cols + i] = src[i];
    }
    for (std::size_t i = 0; i < x.cols; ++i) buf[pad + i] = src[i];

    for (const Biquad& s : f.sections) run_section_inplace(s, buf.data(), buf.size(), true);
    std::reverse(buf.begin(), buf.end());
    for (const Biquad& s : f.sections) run_section_inplace(s, buf.data(), buf.size(), true);
    std::reverse(buf.begin(), buf.end());

    for (std::size_t i = 0; i < x.cols; ++i) out(r, i) = buf[pad + i];
  }
  return out;
}

std::pair<Matrix, double> decimate_by_2(const Matrix& x, double fs) {
  if (x.cols < 64)
    throw ConfigError("decimate_by_2: need at least 64 samples, got " +
                      std::to_string(x.cols));
  double new_rate = fs / 2.0;
  BiquadCascade aa = design_lowpass(0.8 * new_rate / 2.0, 8, fs);
  Matrix smoothed = filtfilt(aa, x);
  std::size_t out_len = (x.cols + 1) / 2;
  Matrix out(x.rows, out_len);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t i = 0; i < out_len; ++i) out(r, i) = smoothed(r, 2 * i);
  return {std::move(out), new_rate};
}

Matrix rereference(const Matrix& x, std::size_t reference_row) {
  if (reference_row >= x.rows)
    throw ConfigError("rereference: reference row " + std::to_string(reference_row) +
                      " out of range for " + std::to_string(x.rows) + " channels");
  Matrix out(x.rows - 1, x.cols);
  std::size_t dst = 0;
  for (std::size_t r = 0; r < x.rows; ++r) {
    if (r == reference_row) continue;
    for (std::size_t c = 0; c < x.cols; ++c) out(dst, c) = x(r, c) - x(reference_row, c);
    ++dst;
  }
  return out;
}

namespace {

template <typename Fn>
Matrix stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

Trial preprocess_trial(const Trial& t, const Montage& montage,
                       const PreprocessConfig& cfg) {
  if (t.samples.rows != montage.total_channels())
    throw DataError("preprocess: trial channel count does not match montage");

  auto [decimated, rate] = [&] {
    try {
      return decimate_by_2(t.samples, t.sample_rate_hz);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("decimate: ") + e.what());
    }
  }();

  Matrix referenced = stage("rereference", [&] {
    if (montage.has_reference()) return rereference(decimated, decimated.rows - 1);
    // No stored reference row: reference against zero, which leaves the data
    // channels untouched but keeps the pipeline shape uniform.
    Matrix with_zero(decimated.rows + 1, decimated.cols);
    for (std::size_t r = 0; r < decimated.rows; ++r)
      for (std::size_t c = 0; c < decimated.cols; ++c) with_zero(r, c) = decimated(r, c);
    return rereference(with_zero, with_zero.rows - 1);
  });

  Matrix notched = stage("notch", [&] {
    // Trials hold whole cycles of the line component, so periodic extension
    // continues it smoothly; the long pad lets the narrow notch settle
    // before the trial starts.
    std::size_t pad = std::min<std::size_t>(300, referenced.cols - 1);
    return filtfilt(design_notch(cfg.notch_hz, rate, cfg.notch_q), referenced, pad,
                    PadMode::Periodic);
  });
  Matrix banded = stage("bandpass", [&] {
    return filtfilt(design_bandpass(cfg.band_lo_hz, cfg.band_hi_hz, cfg.band_order, rate),
                    notched);
  });

  Trial out;
  out.subject_id = t.subject_id;
  out.label = t.label;
  out.sample_rate_hz = rate;
  out.samples = std::move(banded);
  return out;
}

Dataset preprocess_dataset(const Dataset& ds, const PreprocessConfig& cfg) {
  ds.validate();
  Dataset out;
  out.montage = ds.montage;
  out.montage.sample_rate_hz = ds.montage.sample_rate_hz / 2.0;
  out.montage.reference_name.clear();  // consumed by re-referencing
  out.trials.reserve(ds.trials.size());
  for (const Trial& t : ds.trials) out.trials.push_back(preprocess_trial(t, ds.montage, cfg));
  return out;
}

}  // namespace dsp
}  // namespace ssvep
