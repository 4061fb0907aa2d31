#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ssvep/dataio.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"
#include "support/spectral.hpp"

using namespace ssvep;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 3, 1.0, 0.2, 1.0}};
  cfg.seed = 7;
  return cfg;
}

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("ssvep_test_") + tag);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("counter rng is a pure function of seed and counter") {
  CounterRng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CounterRng c(124);
  CHECK(a.next_u64() != c.next_u64());

  CounterRng u(5);
  for (int i = 0; i < 1000; ++i) {
    double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("rng gaussian moments are sane") {
  CounterRng rng(99);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("montage invariants") {
  Montage m = default_montage();
  CHECK(m.channel_names == std::vector<std::string>{"P7", "P3", "Pz", "P4", "P8", "O1", "O2"});
  CHECK(m.sample_rate_hz == 500.0);
  CHECK(m.data_channels() == 7);
  CHECK_FALSE(m.has_reference());

  Montage r = default_montage_with_reference();
  CHECK(r.reference_name == "Fz");
  CHECK(r.total_channels() == 8);

  Montage dup = m;
  dup.channel_names[1] = "P7";
  CHECK_THROWS_AS(dup.validate(), ConfigError);
  Montage empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("synth produces the documented trial grid") {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 100, 1.0, 0.0, 1.0}};
  cfg.seed = 1;
  Dataset ds = synth_dataset(cfg, default_montage());
  CHECK(ds.trials.size() == 400);
  for (const Trial& t : ds.trials) {
    CHECK(t.samples.rows == 7);
    CHECK(t.samples.cols == 1500);
  }
  // 100 trials per class
  std::array<int, 4> counts{};
  for (const Trial& t : ds.trials) ++counts[std::size_t(t.label)];
  for (int c : counts) CHECK(c == 100);
}

TEST_CASE("synth determinism is bit exact") {
  SynthConfig cfg = small_config();
  Dataset a = synth_dataset(cfg, default_montage());
  Dataset b = synth_dataset(cfg, default_montage());
  REQUIRE(a.trials.size() == b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i)
    CHECK(a.trials[i].samples.data == b.trials[i].samples.data);

  cfg.seed += 1;
  Dataset c = synth_dataset(cfg, default_montage());
  CHECK(a.trials[0].samples.data != c.trials[0].samples.data);
}

TEST_CASE("noise-free single-harmonic trial is a pure scaled sinusoid") {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 1, 1.0, 0.0, 0.0}};
  cfg.harmonics = 1;
  cfg.line_noise_amp = 0.0;
  cfg.pink_noise_amp = 0.0;
  cfg.alpha_burst_amp = 0.0;
  cfg.seed = 3;
  Dataset ds = synth_dataset(cfg, default_montage());
  const Trial& t = ds.trials[0];  // label 0 -> 10 Hz
  REQUIRE(t.label == 0);
  for (std::size_t c = 0; c < 7; ++c) {
    for (std::size_t i = 0; i < t.samples.cols; ++i) {
      double time = double(i) / 500.0;
      double expected = kTopography[c] *
                        std::sin(2.0 * oracle::kPi * 10.0 * (time + kChannelLagS[c]));
      CHECK(t.samples(c, i) == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("generated 15 Hz trials peak at the right frequency bin") {
  SynthConfig cfg = small_config();
  Dataset ds = synth_dataset(cfg, default_montage());
  for (const Trial& t : ds.trials) {
    if (t.label != 2) continue;  // 15 Hz class
    const double* o1 = t.samples.row(5);
    double peak = oracle::dominant_frequency(o1, t.samples.cols, 5.0, 40.0, 500.0);
    CHECK(peak == doctest::Approx(15.0).epsilon(0.02));
  }
}

TEST_CASE("noise-free trials peak at their class frequency on every weighted channel") {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 1, 1.0, 0.7, 0.0}};
  cfg.line_noise_amp = 0.0;
  cfg.pink_noise_amp = 0.0;
  cfg.alpha_burst_amp = 0.0;
  cfg.seed = 11;
  Dataset ds = synth_dataset(cfg, default_montage());
  const std::array<double, 4> freqs{10.0, 12.0, 15.0, 30.0};
  for (const Trial& t : ds.trials) {
    for (std::size_t c = 0; c < 7; ++c) {
      double peak = oracle::dominant_frequency(t.samples.row(c), t.samples.cols,
                                               5.0, 40.0, 500.0);
      CHECK(peak == doctest::Approx(freqs[std::size_t(t.label)]).epsilon(0.02));
    }
  }
}

TEST_CASE("harmonics beyond Nyquist are rejected with the offending harmonic") {
  SynthConfig cfg = small_config();
  cfg.harmonics = 9;  // 30 Hz class reaches 270 Hz >= 250 Hz Nyquist
  CHECK_THROWS_WITH_AS(synth_dataset(cfg, default_montage()),
                       doctest::Contains("harmonic 9"), ConfigError);
}

TEST_CASE("reference row carries no stimulus response") {
  SynthConfig cfg;
  cfg.subjects = {{"S01", 1, 1.0, 0.0, 0.0}};
  cfg.line_noise_amp = 0.0;
  cfg.pink_noise_amp = 0.0;
  cfg.alpha_burst_amp = 0.0;
  cfg.seed = 5;
  Dataset ds = synth_dataset(cfg, default_montage_with_reference());
  for (const Trial& t : ds.trials) {
    REQUIRE(t.samples.rows == 8);
    for (std::size_t i = 0; i < t.samples.cols; ++i) CHECK(t.samples(7, i) == 0.0);
  }
}

TEST_CASE("archive round trip is the identity") {
  SynthConfig cfg = small_config();
  Dataset ds = synth_dataset(cfg, default_montage());
  fs::path dir = temp_dir("roundtrip");
  write_archive(ds, dir);
  Dataset back = read_archive(dir);

  REQUIRE(back.trials.size() == ds.trials.size());
  CHECK(back.montage.channel_names == ds.montage.channel_names);
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    CHECK(back.trials[i].subject_id == ds.trials[i].subject_id);
    CHECK(back.trials[i].label == ds.trials[i].label);
    CHECK(back.trials[i].samples.data == ds.trials[i].samples.data);
  }
  fs::remove_all(dir);
}

TEST_CASE("empty dataset archives cleanly") {
  Dataset ds;
  ds.montage = default_montage();
  fs::path dir = temp_dir("empty");
  write_archive(ds, dir);
  Dataset back = read_archive(dir);
  CHECK(back.trials.empty());
  fs::remove_all(dir);
}

TEST_CASE("corrupted archives raise distinct parse errors") {
  SynthConfig cfg = small_config();
  cfg.subjects[0].trials_per_class = 1;
  Dataset ds = synth_dataset(cfg, default_montage());
  fs::path dir = temp_dir("corrupt");

  SUBCASE("missing blob") {
    write_archive(ds, dir);
    fs::remove(dir / "trial_000001.bin");
    CHECK_THROWS_WITH_AS(read_archive(dir), doctest::Contains("missing blob"), DataError);
  }
  SUBCASE("magic mismatch") {
    write_archive(ds, dir);
    std::fstream f(dir / "trial_000000.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("BOGUS!!!", 8);
    f.close();
    CHECK_THROWS_WITH_AS(read_archive(dir), doctest::Contains("magic mismatch"), DataError);
  }
  SUBCASE("truncated blob names the trial") {
    write_archive(ds, dir);
    fs::resize_file(dir / "trial_000002.bin", 100);
    CHECK_THROWS_WITH_AS(read_archive(dir), doctest::Contains("trial_000002"), DataError);
  }
  SUBCASE("shape mismatch vs manifest") {
    write_archive(ds, dir);
    fs::resize_file(dir / "trial_000000.bin", 8 + 4 * 6 * 1500);
    CHECK_THROWS_WITH_AS(read_archive(dir), doctest::Contains("truncated"), DataError);
  }
  SUBCASE("non-finite samples refuse to serialize") {
    ds.trials[0].samples(0, 0) = std::nan("");
    CHECK_THROWS_AS(write_archive(ds, dir), DataError);
  }
  fs::remove_all(dir);
}
