#pragma once

// Recorded performance -> analogy dataset: onsets, hit slices, reference
// selection, feature-difference targets and the train/val/test split.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drumremap/features.hpp"
#include "json.hpp"

namespace drumremap {

struct OnsetConfig {
  double fast_attack_ms = 1.0;
  double fast_release_ms = 20.0;
  double slow_attack_ms = 50.0;
  double slow_release_ms = 50.0;
  double on_threshold_db = 9.0;
  double off_threshold_db = 3.0;
  double min_inter_onset_ms = 50.0;
  double floor_db = -144.0;

  void validate() const;
};

nlohmann::json to_json(const OnsetConfig& cfg);
OnsetConfig onset_config_from_json(const nlohmann::json& j);

/// Streaming dual-envelope onset detector. Both followers track the rectified
/// signal in dB with one-pole attack/release smoothing; an onset fires when
/// fast - slow rises through the on threshold and the detector re-arms once
/// the difference falls below the off threshold. No allocation after
/// construction.
class OnsetDetector {
 public:
  OnsetDetector(const OnsetConfig& cfg, double sample_rate);

  /// True if an onset fires on this sample.
  bool process(double x);
  void reset();

 private:
  double fast_attack_, fast_release_, slow_attack_, slow_release_;
  double on_, off_, floor_;
  std::int64_t min_gap_;
  double fast_, slow_;
  bool armed_ = true;
  std::int64_t position_ = 0;
  std::int64_t last_onset_;
};

std::vector<std::size_t> detect_onsets(std::span<const double> signal, double sample_rate,
                                       const OnsetConfig& cfg = {});

/// Each hit starts at its onset, stops at the next onset and is zero-padded
/// to hit_length_s.
std::vector<std::vector<double>> slice_hits(std::span<const double> signal, std::span<const std::size_t> onsets,
                                            double sample_rate, double hit_length_s = 0.5);

/// Lower median of the transient loudness values. Needs at least 3.
std::size_t select_reference(std::span<const double> transient_lkfs);

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct AnalogyRecord {
  std::size_t hit_id = 0;
  std::size_t onset_sample = 0;
  OnsetFeatures onset_features;
  FeatureArray<double> features{};  // f(x_b)
  FeatureArray<double> y{};         // f(x_b) - f(x_ref)
  Split split = Split::Train;
};

/// Per onset feature min/max, taken from the training split.
struct NormalizationStats {
  std::array<double, 3> min{};
  std::array<double, 3> max{};

  void validate() const;
  /// (x - min) / (max - min), clamped to [0, 1].
  std::array<double, 3> normalize(const OnsetFeatures& f) const;
};

nlohmann::json to_json(const NormalizationStats& s);
NormalizationStats normalization_from_json(const nlohmann::json& j);

NormalizationStats compute_normalization(std::span<const AnalogyRecord> records);

struct DatasetConfig {
  OnsetConfig onset;
  FrameConfig frames;
  double hit_length_s = 0.5;
  std::size_t onset_window = 256;
  double val_frac = 0.1;
  double test_frac = 0.1;
};

struct DatasetManifest {
  std::string source;
  double sample_rate = 48000.0;
  DatasetConfig config;
  std::vector<std::size_t> onsets;
  std::size_t reference_hit_id = 0;
  std::size_t dropped = 0;
  NormalizationStats normalization;
  std::vector<AnalogyRecord> records;

  std::vector<const AnalogyRecord*> select(Split s) const;
  const AnalogyRecord& reference() const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Assigns val/test by even strides over the records sorted by transient
/// loudness; the rest is train. Needs at least 10 records.
void split_records(std::vector<AnalogyRecord>& records, double val_frac = 0.1, double test_frac = 0.1);

/// Features of every hit, y relative to hits[reference], split and
/// normalization stats. Silent or degenerate hits are dropped and counted;
/// the reference must survive.
DatasetManifest build_analogy_dataset(std::span<const std::vector<double>> hits, std::size_t reference,
                                      double sample_rate, const DatasetConfig& cfg = {});

/// The whole pipeline on one recording: detect, slice, drop hits that fail
/// analysis, pick the reference among the rest and build the dataset.
DatasetManifest build_dataset(std::span<const double> signal, double sample_rate, const DatasetConfig& cfg = {});

/// A stand-in recording: `hits` snare-like hits from a second instrument
/// built on the same voice, each with a random velocity that drives level,
/// brightness and drive, plus small random tuning and decay changes.
/// Deterministic for a given seed.
struct SyntheticPerformance {
  double sample_rate = 48000.0;
  std::vector<double> audio;
  std::vector<std::size_t> hit_starts;
  std::vector<double> velocities;
};

SyntheticPerformance synthesize_performance(std::size_t hits, std::uint64_t seed, double sample_rate = 48000.0,
                                            double spacing_s = 0.6);

}  // namespace drumremap
