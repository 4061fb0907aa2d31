#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvep/matrix.hpp"

namespace ssvep {

// Electrode set. channel_names are the data channels fed to classifiers; an
// optional reference channel (stored as the last sample row when present) is
// consumed by the re-referencing stage and never reaches feature extraction.
struct Montage {
  std::vector<std::string> channel_names;
  double sample_rate_hz{500.0};
  std::string reference_name;  // empty when no reference row is stored

  bool has_reference() const { return !reference_name.empty(); }
  std::size_t data_channels() const { return channel_names.size(); }
  std::size_t total_channels() const {
    return channel_names.size() + (has_reference() ? 1 : 0);
  }
  void validate() const;
};

// Parietal/occipital 7-channel layout at 500 Hz.
Montage default_montage();
// Same layout plus a stored Fz reference row for the preprocessing path.
Montage default_montage_with_reference();

// One 3-second recording. samples is total_channels x time.
struct Trial {
  std::string subject_id;
  int label{0};  // class index, maps onto {10, 12, 15, 30} Hz
  Matrix samples;
  double sample_rate_hz{500.0};
};

struct Dataset {
  Montage montage;
  std::vector<Trial> trials;

  void validate() const;
  std::vector<std::string> subject_ids() const;  // unique, in first-seen order
};

struct SubjectSynth {
  std::string id;
  std::size_t trials_per_class{100};
  double gain{1.0};
  double phase_offset_rad{0.0};
  double noise_sigma{1.0};
};

struct SynthConfig {
  std::vector<SubjectSynth> subjects;
  std::array<double, 4> class_freqs_hz{10.0, 12.0, 15.0, 30.0};
  std::size_t harmonics{3};
  double harmonic_decay{0.5};
  double line_noise_amp{2.0};
  double pink_noise_amp{1.0};
  double alpha_burst_amp{0.5};
  std::uint64_t seed{0};
};

inline constexpr double kTrialSeconds = 3.0;
inline constexpr double kLineNoiseHz = 50.0;
inline constexpr double kAlphaHz = 10.0;

// Fixed occipital-dominant amplitude weights for [P7, P3, Pz, P4, P8, O1, O2].
inline constexpr std::array<double, 7> kTopography{0.4, 0.6, 0.8, 0.6, 0.4, 1.0, 1.0};
// Fixed per-channel response lags (seconds). They give each stimulus
// frequency a distinct inter-channel phase pattern, so channel covariance
// carries class information the way recorded scalp data does.
inline constexpr std::array<double, 7> kChannelLagS{0.000, 0.003, 0.006, 0.009,
                                                    0.012, 0.015, 0.018};

// Deterministic synthetic SSVEP recordings; the stand-in for the recorded
// sessions. Each trial mixes the harmonic stimulus response with pink noise,
// a shared 50 Hz line component, a randomly placed alpha burst and white
// sensor noise. Identical cfg (including seed) gives a bit-identical dataset.
Dataset synth_dataset(const SynthConfig& cfg, const Montage& montage);

// Archive = directory with manifest.json plus one binary blob per trial
// (8-byte magic "SSVEPTRL", then float32 little-endian channel-major values).
void write_archive(const Dataset& ds, const std::filesystem::path& path);
Dataset read_archive(const std::filesystem::path& path);

}  // namespace ssvep
