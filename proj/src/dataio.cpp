#include "ssvep/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssvep/errors.hpp"
#include "ssvep/rng.hpp"

namespace ssvep {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr char kBlobMagic[8] = {'S', 'S', 'V', 'E', 'P', 'T', 'R', 'L'};
constexpr std::size_t kPinkBanks = 16;
constexpr double kPinkLoHz = 0.5;
constexpr double kPinkHiHz = 200.0;
constexpr double kAlphaBurstSeconds = 1.0;

double to_f32_grid(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void Montage::validate() const {
  if (channel_names.empty()) throw ConfigError("montage: no channels");
  if (sample_rate_hz <= 0.0) throw ConfigError("montage: sample rate must be positive");
  std::set<std::string> seen;
  for (const auto& name : channel_names) {
    if (name.empty()) throw ConfigError("montage: empty channel name");
    if (!seen.insert(name).second)
      throw ConfigError("montage: duplicate channel name '" + name + "'");
  }
  if (has_reference() && seen.count(reference_name))
    throw ConfigError("montage: reference '" + reference_name +
                      "' also listed as data channel");
}

Montage default_montage() {
  Montage m;
  m.channel_names = {"P7", "P3", "Pz", "P4", "P8", "O1", "O2"};
  m.sample_rate_hz = 500.0;
  return m;
}

Montage default_montage_with_reference() {
  Montage m = default_montage();
  m.reference_name = "Fz";
  return m;
}

void Dataset::validate() const {
  montage.validate();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Trial& t = trials[i];
    if (t.samples.rows != montage.total_channels())
      throw DataError("dataset: trial " + std::to_string(i) +
                      " channel count does not match montage");
    if (t.sample_rate_hz != montage.sample_rate_hz)
      throw DataError("dataset: trial " + std::to_string(i) + " sample rate mismatch");
    if (t.label < 0 || t.label > 3)
      throw DataError("dataset: trial " + std::to_string(i) + " label out of range");
    if (!all_finite(t.samples))
      throw DataError("dataset: trial " + std::to_string(i) + " has non-finite samples");
  }
}

std::vector<std::string> Dataset::subject_ids() const {
  std::vector<std::string> ids;
  for (const Trial& t : trials)
    if (std::find(ids.begin(), ids.end(), t.subject_id) == ids.end())
      ids.push_back(t.subject_id);
  return ids;
}

namespace {

struct PinkBank {
  double freq_hz;
  double amp;
};

std::vector<PinkBank> pink_banks(double amp_total) {
  // Log-spaced sinusoid banks with 1/f amplitudes, scaled so the summed RMS
  // equals amp_total.
  std::vector<PinkBank> banks(kPinkBanks);
  double ratio = std::pow(kPinkHiHz / kPinkLoHz, 1.0 / double(kPinkBanks - 1));
  double power = 0.0;
  for (std::size_t b = 0; b < kPinkBanks; ++b) {
    banks[b].freq_hz = kPinkLoHz * std::pow(ratio, double(b));
    banks[b].amp = 1.0 / banks[b].freq_hz;
    power += 0.5 * banks[b].amp * banks[b].amp;
  }
  double scale = amp_total / std::sqrt(power);
  for (auto& b : banks) b.amp *= scale;
  return banks;
}

}  // namespace

Dataset synth_dataset(const SynthConfig& cfg, const Montage& montage) {
  montage.validate();
  if (cfg.subjects.empty()) throw ConfigError("synth: no subjects configured");
  if (cfg.harmonics < 1) throw ConfigError("synth: harmonics must be >= 1");
  if (cfg.harmonic_decay <= 0.0 || cfg.harmonic_decay > 1.0)
    throw ConfigError("synth: harmonic_decay must be in (0,1]");
  if (montage.data_channels() != kTopography.size())
    throw ConfigError("synth: generator expects the 7-channel default montage");
  double nyquist = montage.sample_rate_hz / 2.0;
  for (double f : cfg.class_freqs_hz) {
    if (f <= 0.0 || f >= nyquist)
      throw ConfigError("synth: class frequency " + std::to_string(f) +
                        " Hz not below Nyquist");
    double top = f * double(cfg.harmonics);
    if (top >= nyquist)
      throw ConfigError("synth: harmonic " + std::to_string(cfg.harmonics) +
                        " of class " + std::to_string(f) + " Hz lands at " +
                        std::to_string(top) + " Hz, at or above Nyquist");
  }

  const double fs = montage.sample_rate_hz;
  const std::size_t n_time = static_cast<std::size_t>(std::llround(kTrialSeconds * fs));
  const std::size_t n_total = montage.total_channels();
  const std::size_t n_data = montage.data_channels();
  const auto banks = pink_banks(cfg.pink_noise_amp);

  Dataset ds;
  ds.montage = montage;
  for (std::size_t si = 0; si < cfg.subjects.size(); ++si) {
    const SubjectSynth& subj = cfg.subjects[si];
    for (int label = 0; label < 4; ++label) {
      const double f0 = cfg.class_freqs_hz[std::size_t(label)];
      for (std::size_t ti = 0; ti < subj.trials_per_class; ++ti) {
        CounterRng rng = CounterRng::derive(cfg.seed, si, std::uint64_t(label), ti);

        // Trial-level draws, in fixed order.
        const double line_phase = rng.uniform(0.0, 2.0 * kPi);
        std::vector<double> line_gain(n_total);
        for (auto& g : line_gain) g = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
        const double alpha_onset =
            rng.uniform(0.0, kTrialSeconds - kAlphaBurstSeconds);
        const double alpha_phase = rng.uniform(0.0, 2.0 * kPi);
        std::vector<double> pink_phase(n_total * kPinkBanks);
        for (auto& p : pink_phase) p = rng.uniform(0.0, 2.0 * kPi);

        Trial trial;
        trial.subject_id = subj.id;
        trial.label = label;
        trial.sample_rate_hz = fs;
        trial.samples = Matrix(n_total, n_time);

        for (std::size_t c = 0; c < n_total; ++c) {
          const bool is_reference = c >= n_data;
          const double topo = is_reference ? 0.0 : kTopography[c];
          const double lag = is_reference ? 0.0 : kChannelLagS[c];
          double* row = trial.samples.row(c);
          for (std::size_t t = 0; t < n_time; ++t) {
            const double time = double(t) / fs;
            double v = 0.0;
            for (std::size_t h = 1; h <= cfg.harmonics; ++h) {
              double hf = double(h) * f0;
              double amp = subj.gain * std::pow(cfg.harmonic_decay, double(h - 1));
              v += amp * topo *
                   std::sin(2.0 * kPi * hf * time + subj.phase_offset_rad +
                            2.0 * kPi * hf * lag);
            }
            v += cfg.line_noise_amp * line_gain[c] *
                 std::sin(2.0 * kPi * kLineNoiseHz * time + line_phase);
            for (std::size_t b = 0; b < kPinkBanks; ++b)
              v += banks[b].amp *
                   std::sin(2.0 * kPi * banks[b].freq_hz * time +
                            pink_phase[c * kPinkBanks + b]);
            if (time >= alpha_onset && time < alpha_onset + kAlphaBurstSeconds) {
              double w = 0.5 - 0.5 * std::cos(2.0 * kPi * (time - alpha_onset) /
                                              kAlphaBurstSeconds);
              v += cfg.alpha_burst_amp * topo * w *
                   std::sin(2.0 * kPi * kAlphaHz * time + alpha_phase);
            }
            row[t] = v;
          }
          // White sensor noise, then snap to the float32 grid so the archive
          // round-trip reproduces samples bit-exactly.
          for (std::size_t t = 0; t < n_time; ++t) {
            row[t] = to_f32_grid(row[t] + subj.noise_sigma * rng.gaussian());
          }
        }
        ds.trials.push_back(std::move(trial));
      }
    }
  }
  ds.validate();
  return ds;
}

namespace {

void write_f32_le(std::ofstream& out, double v) {
  float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  char buf[4] = {char(bits & 0xff), char((bits >> 8) & 0xff),
                 char((bits >> 16) & 0xff), char((bits >> 24) & 0xff)};
  out.write(buf, 4);
}

double read_f32_le(const unsigned char* p) {
  std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                       (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

std::string blob_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trial_%06zu.bin", index);
  return buf;
}

}  // namespace

void write_archive(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw DataError("write_archive: cannot create " + path.string());

  nlohmann::json manifest;
  manifest["format"] = "ssvep-archive-v1";
  manifest["montage"]["channels"] = ds.montage.channel_names;
  manifest["montage"]["sample_rate_hz"] = ds.montage.sample_rate_hz;
  if (ds.montage.has_reference())
    manifest["montage"]["reference"] = ds.montage.reference_name;
  manifest["trials"] = nlohmann::json::array();

  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    const Trial& t = ds.trials[i];
    for (double v : t.samples.data)
      if (!std::isfinite(v))
        throw DataError("write_archive: non-finite sample in trial " +
                        std::to_string(i));
    std::string file = blob_name(i);
    std::ofstream blob(path / file, std::ios::binary | std::ios::trunc);
    if (!blob) throw DataError("write_archive: cannot open " + (path / file).string());
    blob.write(kBlobMagic, 8);
    for (double v : t.samples.data) write_f32_le(blob, v);
    if (!blob) throw DataError("write_archive: I/O failure on " + (path / file).string());

    manifest["trials"].push_back({{"subject_id", t.subject_id},
                                  {"label", t.label},
                                  {"file", file},
                                  {"n_channels", t.samples.rows},
                                  {"n_samples", t.samples.cols}});
  }

  std::ofstream mf(path / "manifest.json", std::ios::trunc);
  if (!mf) throw DataError("write_archive: cannot open manifest in " + path.string());
  mf << manifest.dump(2) << "\n";
  if (!mf) throw DataError("write_archive: I/O failure on manifest");
}

Dataset read_archive(const std::filesystem::path& path) {
  std::ifstream mf(path / "manifest.json");
  if (!mf) throw DataError("read_archive: missing manifest.json in " + path.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("read_archive: manifest parse failure: ") + e.what());
  }

  Dataset ds;
  try {
    if (manifest.at("format").get<std::string>() != "ssvep-archive-v1")
      throw DataError("read_archive: unknown archive format");
    ds.montage.channel_names =
        manifest.at("montage").at("channels").get<std::vector<std::string>>();
    ds.montage.sample_rate_hz = manifest.at("montage").at("sample_rate_hz").get<double>();
    if (manifest.at("montage").contains("reference"))
      ds.montage.reference_name = manifest.at("montage").at("reference").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("read_archive: malformed manifest: ") + e.what());
  }

  for (const auto& rec : manifest.at("trials")) {
    Trial t;
    std::string file;
    std::size_t n_channels = 0, n_samples = 0;
    try {
      t.subject_id = rec.at("subject_id").get<std::string>();
      t.label = rec.at("label").get<int>();
      file = rec.at("file").get<std::string>();
      n_channels = rec.at("n_channels").get<std::size_t>();
      n_samples = rec.at("n_samples").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("read_archive: malformed trial record: ") + e.what());
    }
    t.sample_rate_hz = ds.montage.sample_rate_hz;
    if (n_channels != ds.montage.total_channels())
      throw DataError("read_archive: trial '" + file +
                      "' declares channel count inconsistent with montage");

    std::ifstream blob(path / file, std::ios::binary);
    if (!blob) throw DataError("read_archive: missing blob '" + file + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kBlobMagic, 8) != 0)
      throw DataError("read_archive: magic mismatch in blob '" + file + "'");
    std::size_t expected = 8 + 4 * n_channels * n_samples;
    if (bytes.size() < expected)
      throw DataError("read_archive: truncated blob '" + file + "' (" +
                      std::to_string(bytes.size()) + " of " +
                      std::to_string(expected) + " bytes)");
    if (bytes.size() > expected)
      throw DataError("read_archive: blob '" + file +
                      "' larger than manifest shape implies");

    t.samples = Matrix(n_channels, n_samples);
    const unsigned char* p = bytes.data() + 8;
    for (double& v : t.samples.data) {
      v = read_f32_le(p);
      p += 4;
    }
    ds.trials.push_back(std::move(t));
  }
  ds.validate();
  return ds;
}

}  // namespace ssvep
