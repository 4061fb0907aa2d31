#include <doctest.h>

#include <cmath>

#include "ssvep/dataio.hpp"
#include "ssvep/dsp.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"
#include "support/spectral.hpp"

using namespace ssvep;
using namespace ssvep::dsp;

namespace {

Matrix sine_rows(std::size_t rows, std::size_t n, double freq, double fs,
                 double amp = 1.0) {
  Matrix x(rows, n);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < n; ++t)
      x(r, t) = amp * std::sin(2.0 * oracle::kPi * freq * double(t) / fs);
  return x;
}

std::vector<double> apply_cascade(const BiquadCascade& f, std::vector<double> x) {
  Matrix m(1, x.size());
  m.data = std::move(x);
  return filter_forward(f, m).data;
}

}  // namespace

TEST_CASE("decimate_by_2 halves rate and preserves DC") {
  Matrix x(2, 1500);
  for (double& v : x.data) v = 3.25;
  auto [y, rate] = decimate_by_2(x, 500.0);
  CHECK(rate == 250.0);
  CHECK(y.cols == 750);
  CHECK(y.rows == 2);
  for (double v : y.data) CHECK(v == doctest::Approx(3.25).epsilon(1e-9));
}

TEST_CASE("decimate_by_2 keeps in-band tones and kills out-of-band tones") {
  Matrix in_band = sine_rows(1, 1500, 10.0, 500.0);
  auto [y, rate] = decimate_by_2(in_band, 500.0);
  double peak = oracle::dominant_frequency(y.row(0), y.cols, 2.0, 100.0, rate);
  CHECK(peak == doctest::Approx(10.0).epsilon(0.05));

  Matrix out_band = sine_rows(1, 1500, 200.0, 500.0);
  double in_rms = oracle::rms(out_band.row(0), out_band.cols);
  auto [z, rate2] = decimate_by_2(out_band, 500.0);
  CHECK(rate2 == 250.0);
  CHECK(oracle::rms(z.row(0), z.cols) < 0.01 * in_rms);
}

TEST_CASE("decimate_by_2 rejects too-short input") {
  Matrix x(1, 40);
  CHECK_THROWS_WITH_AS(decimate_by_2(x, 500.0), doctest::Contains("64"), ConfigError);
}

TEST_CASE("rereference subtracts and drops the reference row") {
  Matrix x(2, 2);
  x(0, 0) = 3;
  x(0, 1) = 3;
  x(1, 0) = 1;
  x(1, 1) = 1;
  Matrix y = rereference(x, 1);
  CHECK(y.rows == 1);
  CHECK(y(0, 0) == 2.0);
  CHECK(y(0, 1) == 2.0);

  SUBCASE("identical channels cancel") {
    Matrix z(3, 4);
    for (double& v : z.data) v = 1.7;
    Matrix out = rereference(z, 2);
    for (double v : out.data) CHECK(v == 0.0);
  }
  SUBCASE("zero reference leaves channels unchanged") {
    Matrix z(3, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      z(0, c) = double(c);
      z(1, c) = 2.0 * double(c);
      z(2, c) = 0.0;
    }
    Matrix out = rereference(z, 2);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(out(0, c) == double(c));
      CHECK(out(1, c) == 2.0 * double(c));
    }
  }
  SUBCASE("out of range index") { CHECK_THROWS_AS(rereference(x, 5), ConfigError); }
}

TEST_CASE("notch design hits its specification") {
  BiquadCascade notch = design_notch(50.0, 250.0, 30.0);
  REQUIRE(notch.sections.size() == 1);
  CHECK(notch.stable());

  auto apply = [&](std::vector<double> x) { return apply_cascade(notch, std::move(x)); };
  double at_center = oracle::impulse_response_magnitude(apply, 8192, 50.0, 250.0);
  double at_dc = oracle::impulse_response_magnitude(apply, 8192, 0.0, 250.0);
  double at_20 = oracle::impulse_response_magnitude(apply, 8192, 20.0, 250.0);

  CHECK(at_center <= std::pow(10.0, -30.0 / 20.0));
  CHECK(at_dc == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(20.0 * std::log10(at_20) == doctest::Approx(0.0).epsilon(1.0));

  CHECK_THROWS_AS(design_notch(130.0, 250.0, 30.0), ConfigError);
  CHECK_THROWS_AS(design_notch(50.0, 250.0, -1.0), ConfigError);
}

TEST_CASE("bandpass design hits its specification") {
  BiquadCascade band = design_bandpass(9.0, 100.0, 4, 250.0);
  REQUIRE(band.sections.size() == 2);
  CHECK(band.stable());

  auto apply = [&](std::vector<double> x) { return apply_cascade(band, std::move(x)); };
  double at_dc = oracle::impulse_response_magnitude(apply, 8192, 0.0, 250.0);
  double at_30 = oracle::impulse_response_magnitude(apply, 8192, 30.0, 250.0);
  double at_60 = oracle::impulse_response_magnitude(apply, 8192, 60.0, 250.0);

  CHECK(at_dc <= std::pow(10.0, -20.0 / 20.0));
  CHECK(20.0 * std::log10(at_30) == doctest::Approx(0.0).epsilon(1.0));
  CHECK(20.0 * std::log10(at_60) == doctest::Approx(0.0).epsilon(1.0));

  CHECK_THROWS_AS(design_bandpass(100.0, 9.0, 4, 250.0), ConfigError);
  CHECK_THROWS_AS(design_bandpass(9.0, 130.0, 4, 250.0), ConfigError);
  CHECK_THROWS_AS(design_bandpass(9.0, 100.0, 3, 250.0), ConfigError);
}

TEST_CASE("designed cascades always satisfy the pole stability invariant") {
  for (double lo : {1.0, 5.0, 9.0, 20.0})
    for (double hi : {40.0, 80.0, 100.0, 120.0})
      for (std::size_t order : {2u, 4u, 6u, 8u}) {
        BiquadCascade c = design_bandpass(lo, hi, order, 250.0);
        CHECK(c.stable());
        CHECK(c.sections.size() == order / 2);
      }
  for (double f0 : {10.0, 50.0, 60.0, 110.0}) CHECK(design_notch(f0, 250.0, 30.0).stable());
  for (std::size_t order : {2u, 4u, 8u}) CHECK(design_lowpass(100.0, order, 500.0).stable());
}

TEST_CASE("filtfilt is zero-phase and identity-preserving") {
  SUBCASE("identity cascade") {
    BiquadCascade id;
    id.sections.push_back({});
    Matrix x = sine_rows(1, 500, 17.0, 250.0);
    Matrix y = filtfilt(id, x);
    for (std::size_t i = 0; i < x.cols; ++i)
      CHECK(y(0, i) == doctest::Approx(x(0, i)).epsilon(1e-12));
  }

  SUBCASE("notch center sine is removed") {
    // The pipeline notch configuration: q=30 with periodic extension, which
    // continues the whole-cycle 50 Hz component exactly across the pad.
    BiquadCascade notch = design_notch(50.0, 250.0, 30.0);
    for (double phase : {0.0, 1.1, 2.6, 4.2}) {
      Matrix x(1, 750);
      for (std::size_t t = 0; t < x.cols; ++t)
        x(0, t) = std::sin(2.0 * oracle::kPi * 50.0 * double(t) / 250.0 + phase);
      Matrix y = filtfilt(notch, x, 300, PadMode::Periodic);
      CHECK(oracle::rms(y.row(0), y.cols) <= 0.03 * oracle::rms(x.row(0), x.cols));
    }
  }

  SUBCASE("linearity") {
    BiquadCascade band = design_bandpass(9.0, 100.0, 4, 250.0);
    Matrix x = sine_rows(1, 750, 23.0, 250.0);
    Matrix y = filtfilt(band, x);
    Matrix x3 = x;
    for (double& v : x3.data) v *= 3.0;
    Matrix y3 = filtfilt(band, x3);
    for (std::size_t i = 0; i < x.cols; ++i)
      CHECK(y3(0, i) == doctest::Approx(3.0 * y(0, i)).epsilon(1e-12));
  }

  SUBCASE("zero lag via cross-correlation") {
    BiquadCascade band = design_bandpass(9.0, 100.0, 4, 250.0);
    Matrix x = sine_rows(1, 1000, 30.0, 250.0);
    Matrix y = filtfilt(band, x);
    int best_lag = 0;
    double best = -1e300;
    for (int lag = -5; lag <= 5; ++lag) {
      double corr = 0.0;
      for (int i = 100; i < 900; ++i) corr += x(0, std::size_t(i)) * y(0, std::size_t(i + lag));
      if (corr > best) {
        best = corr;
        best_lag = lag;
      }
    }
    CHECK(best_lag == 0);
  }

  SUBCASE("too-short input is rejected") {
    BiquadCascade band = design_bandpass(9.0, 100.0, 4, 250.0);
    Matrix x(1, 10);
    CHECK_THROWS_AS(filtfilt(band, x), ConfigError);
  }
}

TEST_CASE("preprocess_trial chains the documented stages") {
  Montage montage = default_montage();
  SynthConfig cfg;
  cfg.subjects = {{"S01", 2, 1.0, 0.1, 1.0}};
  cfg.seed = 21;
  Dataset ds = synth_dataset(cfg, montage);

  Trial out = preprocess_trial(ds.trials[0], montage);
  CHECK(out.samples.rows == 7);
  CHECK(out.samples.cols == 750);
  CHECK(out.sample_rate_hz == 250.0);
  CHECK(out.label == ds.trials[0].label);
  CHECK(out.subject_id == ds.trials[0].subject_id);

  SUBCASE("all-zero trial stays zero") {
    Trial zero = ds.trials[0];
    zero.samples = Matrix(7, 1500);
    Trial z = preprocess_trial(zero, montage);
    for (double v : z.samples.data) CHECK(std::abs(v) < 1e-12);
  }

  SUBCASE("50 Hz line component is strongly attenuated") {
    Trial with_line = ds.trials[0];
    for (std::size_t c = 0; c < 7; ++c)
      for (std::size_t t = 0; t < 1500; ++t)
        with_line.samples(c, t) += 5.0 * std::sin(2.0 * oracle::kPi * 50.0 * double(t) / 500.0);

    Trial cleaned = preprocess_trial(with_line, montage);
    PreprocessConfig no_notch;
    no_notch.notch_q = 1e-9;  // placeholder; compare against a pipeline without the notch
    // Reference pipeline: decimate + bandpass only.
    auto [dec, rate] = decimate_by_2(with_line.samples, 500.0);
    Matrix band_only = filtfilt(design_bandpass(9.0, 100.0, 4, rate), dec);

    double notched_mag =
        oracle::dft_magnitude(cleaned.samples.row(0), cleaned.samples.cols, 50.0, 250.0);
    double unnotched_mag =
        oracle::dft_magnitude(band_only.row(0), band_only.cols, 50.0, 250.0);
    CHECK(notched_mag < 0.05 * unnotched_mag);
  }
}

TEST_CASE("preprocess uses the stored reference row to cancel common mode") {
  Montage montage = default_montage_with_reference();
  SynthConfig cfg;
  cfg.subjects = {{"S01", 1, 1.0, 0.0, 0.0}};
  cfg.pink_noise_amp = 0.0;
  cfg.alpha_burst_amp = 0.0;
  cfg.line_noise_amp = 0.0;
  cfg.seed = 9;
  Dataset ds = synth_dataset(cfg, montage);
  Trial t = ds.trials[0];
  REQUIRE(t.samples.rows == 8);
  // Inject an identical drift on every row including the reference.
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t i = 0; i < t.samples.cols; ++i)
      t.samples(c, i) += 2.0 * std::sin(2.0 * oracle::kPi * 30.0 * double(i) / 500.0 + 0.5);

  Trial without_common = preprocess_trial(ds.trials[0], montage);
  Trial with_common = preprocess_trial(t, montage);
  REQUIRE(with_common.samples.rows == 7);
  for (std::size_t i = 0; i < with_common.samples.data.size(); ++i)
    CHECK(with_common.samples.data[i] ==
          doctest::Approx(without_common.samples.data[i]).epsilon(1e-6).scale(1.0));
}

TEST_CASE("preprocess pipeline is linear") {
  Montage montage = default_montage();
  SynthConfig cfg;
  cfg.subjects = {{"S01", 2, 1.0, 0.3, 0.8}};
  cfg.seed = 33;
  Dataset ds = synth_dataset(cfg, montage);
  const Trial& a = ds.trials[0];
  const Trial& b = ds.trials[1];

  Trial combo = a;
  for (std::size_t i = 0; i < combo.samples.data.size(); ++i)
    combo.samples.data[i] = 2.0 * a.samples.data[i] - 0.5 * b.samples.data[i];

  Trial pa = preprocess_trial(a, montage);
  Trial pb = preprocess_trial(b, montage);
  Trial pc = preprocess_trial(combo, montage);
  double scale = 0.0;
  for (double v : pc.samples.data) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < pc.samples.data.size(); ++i) {
    double expected = 2.0 * pa.samples.data[i] - 0.5 * pb.samples.data[i];
    CHECK(std::abs(pc.samples.data[i] - expected) < 1e-9 * scale);
  }
}

TEST_CASE("white noise energy is not amplified") {
  CounterRng rng(17);
  Montage montage = default_montage();
  Trial t;
  t.subject_id = "S01";
  t.label = 0;
  t.sample_rate_hz = 500.0;
  t.samples = Matrix(7, 1500);
  for (double& v : t.samples.data) v = rng.gaussian();
  Trial out = preprocess_trial(t, montage);
  double in_rms = oracle::rms(t.samples.data.data(), t.samples.data.size());
  double out_rms = oracle::rms(out.samples.data.data(), out.samples.data.size());
  CHECK(out_rms <= 1.05 * in_rms);
}
