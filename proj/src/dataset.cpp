#include "drumremap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "drumremap/errors.hpp"
#include "drumremap/json_io.hpp"
#include "drumremap/synth.hpp"

namespace drumremap {
namespace {

constexpr int kSchemaVersion = 1;
constexpr std::array<const char*, 3> kOnsetFeatureNames = {"rms", "spectral_centroid", "spectral_flatness"};

double one_pole(double ms, double sample_rate) { return std::exp(-1.0 / (ms * sample_rate / 1000.0)); }

struct HitAnalysis {
  FeatureArray<double> features;
  OnsetFeatures onset;
};

std::optional<HitAnalysis> analyze_hit(std::span<const double> hit, double sample_rate, const DatasetConfig& cfg,
                                       OnsetAnalyzer& analyzer) {
  if (hit.size() < cfg.onset_window) return std::nullopt;
  try {
    auto onset = analyzer.analyze(hit.first(cfg.onset_window));
    if (!onset) return std::nullopt;
    const auto features = extract_feature_vector<double>(hit, cfg.frames, sample_rate);
    for (double v : features) {
      if (!std::isfinite(v)) return std::nullopt;
    }
    return HitAnalysis{features, *onset};
  } catch (const DataError&) {
    return std::nullopt;
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

DatasetManifest assemble(std::span<const std::optional<HitAnalysis>> analyses, std::size_t reference,
                         double sample_rate, const DatasetConfig& cfg) {
  if (reference >= analyses.size()) throw DataError("reference hit out of range");
  if (!analyses[reference]) throw DataError("reference hit is silent or degenerate");
  const auto& ref = analyses[reference]->features;

  DatasetManifest m;
  m.sample_rate = sample_rate;
  m.config = cfg;
  m.reference_hit_id = reference;
  for (std::size_t i = 0; i < analyses.size(); ++i) {
    if (!analyses[i]) {
      ++m.dropped;
      continue;
    }
    AnalogyRecord r;
    r.hit_id = i;
    r.onset_features = analyses[i]->onset;
    r.features = analyses[i]->features;
    for (std::size_t k = 0; k < kNumFeatures; ++k) r.y[k] = i == reference ? 0.0 : r.features[k] - ref[k];
    m.records.push_back(r);
  }
  split_records(m.records, cfg.val_frac, cfg.test_frac);
  m.normalization = compute_normalization(m.records);
  return m;
}

std::vector<std::optional<HitAnalysis>> analyze_all(std::span<const std::vector<double>> hits, double sample_rate,
                                                    const DatasetConfig& cfg) {
  cfg.frames.validate();
  if (cfg.onset_window == 0) throw DataError("onset window must be positive");
  OnsetAnalyzer analyzer(cfg.onset_window, sample_rate);
  std::vector<std::optional<HitAnalysis>> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(analyze_hit(h, sample_rate, cfg, analyzer));
  return out;
}

template <class T>
T get_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("field '") + key + "': " + e.what());
  }
}

FeatureArray<double> feature_array_from_json(const nlohmann::json& j, const char* key) {
  const auto v = get_field<std::vector<double>>(j, key);
  if (v.size() != kNumFeatures) throw DataError(std::string("'") + key + "' must have 7 entries");
  FeatureArray<double> out;
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void OnsetConfig::validate() const {
  if (!(fast_attack_ms > 0 && fast_release_ms > 0 && slow_attack_ms > 0 && slow_release_ms > 0 &&
        min_inter_onset_ms > 0)) {
    throw DataError("onset detector times must be positive");
  }
  if (!(on_threshold_db > off_threshold_db)) throw DataError("on threshold must exceed off threshold");
}

nlohmann::json to_json(const OnsetConfig& c) {
  return {{"fast_attack_ms", c.fast_attack_ms},   {"fast_release_ms", c.fast_release_ms},
          {"slow_attack_ms", c.slow_attack_ms},   {"slow_release_ms", c.slow_release_ms},
          {"on_threshold_db", c.on_threshold_db}, {"off_threshold_db", c.off_threshold_db},
          {"min_inter_onset_ms", c.min_inter_onset_ms}, {"floor_db", c.floor_db}};
}

OnsetConfig onset_config_from_json(const nlohmann::json& j) {
  OnsetConfig c;
  c.fast_attack_ms = get_field<double>(j, "fast_attack_ms");
  c.fast_release_ms = get_field<double>(j, "fast_release_ms");
  c.slow_attack_ms = get_field<double>(j, "slow_attack_ms");
  c.slow_release_ms = get_field<double>(j, "slow_release_ms");
  c.on_threshold_db = get_field<double>(j, "on_threshold_db");
  c.off_threshold_db = get_field<double>(j, "off_threshold_db");
  c.min_inter_onset_ms = get_field<double>(j, "min_inter_onset_ms");
  if (j.contains("floor_db")) c.floor_db = get_field<double>(j, "floor_db");
  c.validate();
  return c;
}

OnsetDetector::OnsetDetector(const OnsetConfig& cfg, double sample_rate) {
  cfg.validate();
  if (!(sample_rate > 0.0)) throw DataError("sample rate must be positive");
  fast_attack_ = one_pole(cfg.fast_attack_ms, sample_rate);
  fast_release_ = one_pole(cfg.fast_release_ms, sample_rate);
  slow_attack_ = one_pole(cfg.slow_attack_ms, sample_rate);
  slow_release_ = one_pole(cfg.slow_release_ms, sample_rate);
  on_ = cfg.on_threshold_db;
  off_ = cfg.off_threshold_db;
  floor_ = cfg.floor_db;
  min_gap_ = static_cast<std::int64_t>(std::ceil(cfg.min_inter_onset_ms * sample_rate / 1000.0));
  reset();
}

void OnsetDetector::reset() {
  fast_ = slow_ = floor_;
  armed_ = true;
  position_ = 0;
  last_onset_ = std::numeric_limits<std::int64_t>::min() / 2;
}

bool OnsetDetector::process(double x) {
  const double a = std::abs(x);
  const double db = a > 0.0 ? std::max(20.0 * std::log10(a), floor_) : floor_;
  fast_ = (db > fast_ ? fast_attack_ : fast_release_) * (fast_ - db) + db;
  slow_ = (db > slow_ ? slow_attack_ : slow_release_) * (slow_ - db) + db;
  const double diff = fast_ - slow_;
  bool fired = false;
  if (armed_ && diff >= on_) {
    armed_ = false;
    if (position_ - last_onset_ >= min_gap_) {
      fired = true;
      last_onset_ = position_;
    }
  } else if (!armed_ && diff < off_) {
    armed_ = true;
  }
  ++position_;
  return fired;
}

std::vector<std::size_t> detect_onsets(std::span<const double> signal, double sample_rate, const OnsetConfig& cfg) {
  OnsetDetector det(cfg, sample_rate);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (det.process(signal[i])) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<double>> slice_hits(std::span<const double> signal, std::span<const std::size_t> onsets,
                                            double sample_rate, double hit_length_s) {
  if (!(hit_length_s > 0.0)) throw DataError("hit length must be positive");
  if (!std::is_sorted(onsets.begin(), onsets.end())) throw DataError("onsets must be sorted");
  const auto length = static_cast<std::size_t>(std::llround(hit_length_s * sample_rate));
  std::vector<std::vector<double>> hits;
  hits.reserve(onsets.size());
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    std::vector<double> hit(length, 0.0);
    const std::size_t begin = std::min(onsets[i], signal.size());
    std::size_t end = std::min({begin + length, signal.size()});
    if (i + 1 < onsets.size()) end = std::min(end, std::max(begin, onsets[i + 1]));
    std::copy(signal.begin() + static_cast<std::ptrdiff_t>(begin), signal.begin() + static_cast<std::ptrdiff_t>(end),
              hit.begin());
    hits.push_back(std::move(hit));
  }
  return hits;
}

std::size_t select_reference(std::span<const double> transient_lkfs) {
  if (transient_lkfs.size() < 3) throw DataError("reference selection needs at least 3 hits");
  std::vector<std::size_t> order(transient_lkfs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return transient_lkfs[a] < transient_lkfs[b]; });
  return order[(order.size() - 1) / 2];
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw DataError("unknown split '" + name + "'");
}

void NormalizationStats::validate() const {
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(std::isfinite(min[i]) && std::isfinite(max[i]) && min[i] < max[i])) {
      throw DataError(std::string("normalization needs min < max for ") + kOnsetFeatureNames[i]);
    }
  }
}

std::array<double, 3> NormalizationStats::normalize(const OnsetFeatures& f) const {
  const auto raw = f.as_array();
  std::array<double, 3> out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::clamp((raw[i] - min[i]) / (max[i] - min[i]), 0.0, 1.0);
  return out;
}

nlohmann::json to_json(const NormalizationStats& s) {
  return {{"features", kOnsetFeatureNames}, {"min", s.min}, {"max", s.max}};
}

NormalizationStats normalization_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  const auto lo = get_field<std::vector<double>>(j, "min");
  const auto hi = get_field<std::vector<double>>(j, "max");
  if (lo.size() != 3 || hi.size() != 3) throw DataError("normalization stats need 3 entries each");
  std::copy(lo.begin(), lo.end(), s.min.begin());
  std::copy(hi.begin(), hi.end(), s.max.begin());
  s.validate();
  return s;
}

NormalizationStats compute_normalization(std::span<const AnalogyRecord> records) {
  NormalizationStats s;
  s.min.fill(std::numeric_limits<double>::infinity());
  s.max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& r : records) {
    if (r.split != Split::Train) continue;
    const auto v = r.onset_features.as_array();
    for (std::size_t i = 0; i < 3; ++i) {
      s.min[i] = std::min(s.min[i], v[i]);
      s.max[i] = std::max(s.max[i], v[i]);
    }
  }
  s.validate();
  return s;
}

void split_records(std::vector<AnalogyRecord>& records, double val_frac, double test_frac) {
  const std::size_t n = records.size();
  if (n < 10) throw DataError("split needs at least 10 records, got " + std::to_string(n));
  if (!(val_frac > 0.0 && test_frac > 0.0 && val_frac + test_frac < 1.0)) {
    throw DataError("val/test fractions must be positive and sum below 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].features[0] < records[b].features[0];
  });
  for (auto& r : records) r.split = Split::Train;

  const auto count = [&](double frac) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
  };
  const std::size_t n_val = count(val_frac);
  const std::size_t n_test = count(test_frac);

  // Even strides from the quietest to the loudest hit; test sits next to val.
  const auto positions = [&](std::size_t k) {
    std::vector<std::size_t> pos(k);
    if (k == 1) {
      pos[0] = (n - 1) / 2;
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        pos[i] = static_cast<std::size_t>(
            std::llround(static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(k - 1)));
      }
    }
    return pos;
  };
  for (std::size_t p : positions(n_val)) records[order[p]].split = Split::Val;
  // Test takes the nearest free slot to each stride point: next one up,
  // except at the loud end where it steps down.
  const auto anchors = positions(n_test);
  const auto free_at = [&](long long p) {
    return p >= 0 && p < static_cast<long long>(n) && records[order[static_cast<std::size_t>(p)]].split == Split::Train;
  };
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto p = static_cast<long long>(anchors[i]);
    const bool down_first = i + 1 == anchors.size() && anchors.size() > 1;
    for (long long d = 0; d < static_cast<long long>(n); ++d) {
      const long long first = down_first ? p - d : p + d;
      const long long second = down_first ? p + d : p - d;
      if (free_at(first)) {
        records[order[static_cast<std::size_t>(first)]].split = Split::Test;
        break;
      }
      if (free_at(second)) {
        records[order[static_cast<std::size_t>(second)]].split = Split::Test;
        break;
      }
    }
  }
}

std::vector<const AnalogyRecord*> DatasetManifest::select(Split s) const {
  std::vector<const AnalogyRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

const AnalogyRecord& DatasetManifest::reference() const {
  for (const auto& r : records) {
    if (r.hit_id == reference_hit_id) return r;
  }
  throw DataError("manifest has no record for the reference hit");
}

DatasetManifest build_analogy_dataset(std::span<const std::vector<double>> hits, std::size_t reference,
                                      double sample_rate, const DatasetConfig& cfg) {
  const auto analyses = analyze_all(hits, sample_rate, cfg);
  return assemble(analyses, reference, sample_rate, cfg);
}

DatasetManifest build_dataset(std::span<const double> signal, double sample_rate, const DatasetConfig& cfg) {
  const auto onsets = detect_onsets(signal, sample_rate, cfg.onset);
  const auto hits = slice_hits(signal, onsets, sample_rate, cfg.hit_length_s);
  const auto analyses = analyze_all(hits, sample_rate, cfg);

  std::vector<std::size_t> alive;
  std::vector<double> loudness;
  for (std::size_t i = 0; i < analyses.size(); ++i) {
    if (analyses[i]) {
      alive.push_back(i);
      loudness.push_back(analyses[i]->features[0]);
    }
  }
  if (alive.size() < 3) {
    throw DataError("only " + std::to_string(alive.size()) + " usable hits detected (" +
                    std::to_string(onsets.size()) + " onsets)");
  }
  auto m = assemble(analyses, alive[select_reference(loudness)], sample_rate, cfg);
  m.onsets = onsets;
  for (auto& r : m.records) r.onset_sample = onsets[r.hit_id];
  return m;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    records.push_back({{"hit_id", r.hit_id},
                       {"onset_sample", r.onset_sample},
                       {"onset_features",
                        {{"rms", r.onset_features.rms},
                         {"spectral_centroid", r.onset_features.spectral_centroid},
                         {"spectral_flatness", r.onset_features.spectral_flatness}}},
                       {"features", r.features},
                       {"y", r.y},
                       {"split", split_name(r.split)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"source", m.source},
          {"sample_rate", m.sample_rate},
          {"hit_length_s", m.config.hit_length_s},
          {"onset_window", m.config.onset_window},
          {"val_frac", m.config.val_frac},
          {"test_frac", m.config.test_frac},
          {"frame_config", to_json(m.config.frames)},
          {"onset_config", to_json(m.config.onset)},
          {"feature_names", kFeatureNames},
          {"onsets", m.onsets},
          {"reference_hit_id", m.reference_hit_id},
          {"dropped", m.dropped},
          {"normalization", to_json(m.normalization)},
          {"records", records}};
}

namespace {

DatasetManifest parse_manifest(const nlohmann::json& j) {
  if (get_field<int>(j, "schema_version") != kSchemaVersion) throw DataError("unsupported manifest schema_version");
  DatasetManifest m;
  m.source = get_field<std::string>(j, "source");
  m.sample_rate = get_field<double>(j, "sample_rate");
  if (!(m.sample_rate > 0.0)) throw DataError("sample_rate must be positive");
  m.config.hit_length_s = get_field<double>(j, "hit_length_s");
  m.config.onset_window = get_field<std::size_t>(j, "onset_window");
  m.config.val_frac = get_field<double>(j, "val_frac");
  m.config.test_frac = get_field<double>(j, "test_frac");
  m.config.frames = frame_config_from_json(j.at("frame_config"));
  m.config.onset = onset_config_from_json(j.at("onset_config"));
  m.onsets = get_field<std::vector<std::size_t>>(j, "onsets");
  m.reference_hit_id = get_field<std::size_t>(j, "reference_hit_id");
  m.dropped = get_field<std::size_t>(j, "dropped");
  m.normalization = normalization_from_json(j.at("normalization"));
  const auto& recs = j.at("records");
  if (!recs.is_array()) throw DataError("'records' must be an array");
  bool has_reference = false;
  for (const auto& rj : recs) {
    AnalogyRecord r;
    r.hit_id = get_field<std::size_t>(rj, "hit_id");
    r.onset_sample = get_field<std::size_t>(rj, "onset_sample");
    const auto& of = rj.at("onset_features");
    r.onset_features.rms = get_field<double>(of, "rms");
    r.onset_features.spectral_centroid = get_field<double>(of, "spectral_centroid");
    r.onset_features.spectral_flatness = get_field<double>(of, "spectral_flatness");
    r.features = feature_array_from_json(rj, "features");
    r.y = feature_array_from_json(rj, "y");
    r.split = split_from_name(get_field<std::string>(rj, "split"));
    if (r.hit_id == m.reference_hit_id) {
      if (has_reference) throw DataError("duplicate reference record");
      has_reference = true;
      for (double v : r.y) {
        if (v != 0.0) throw DataError("reference record must have y = 0");
      }
    }
    m.records.push_back(r);
  }
  if (!has_reference) throw DataError("manifest has no record for the reference hit");
  return m;
}

}  // namespace

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("manifest must be a JSON object");
  try {
    return parse_manifest(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) { return manifest_from_json(read_json_file(path)); }

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) { write_json_file(path, to_json(m)); }

// ---------------------------------------------------------------------------

SyntheticPerformance synthesize_performance(std::size_t hits, std::uint64_t seed, double sample_rate,
                                            double spacing_s) {
  if (hits == 0) throw DataError("performance needs at least one hit");
  if (!(spacing_s >= 0.5)) throw DataError("hit spacing must be at least 0.5 s");
  std::mt19937_64 rng(seed);
  const auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  // A brighter, noisier kit than the factory presets.
  // osc1: freq fm gain decay | osc2: freq fm gain decay | fenv | noise: gain decay | hpf: cutoff q | drive
  const ParamArray<double> kit = {0.58, 0.20, 0.40, 0.42, 0.60, 0.12, 0.30, 0.36,
                                  0.45, 0.60, 0.50, 0.60, 0.20, 0.50};
  const ParamRangeTable ranges;
  const auto spacing = static_cast<std::size_t>(std::llround(spacing_s * sample_rate));
  const RenderConfig rc{0.5, sample_rate, 0};
  const std::size_t lead = static_cast<std::size_t>(0.1 * sample_rate);

  SyntheticPerformance perf;
  perf.sample_rate = sample_rate;
  perf.audio.assign(lead + hits * spacing, 0.0);
  for (std::size_t h = 0; h < hits; ++h) {
    const double v = uniform(0.05, 1.0);
    ParamArray<double> theta = kit;
    const auto add = [&](Slot s, double d) { theta[index(s)] = std::clamp(theta[index(s)] + d, 0.0, 1.0); };
    add(Slot::Osc1Gain, 0.45 * (v - 0.5));
    add(Slot::Osc2Gain, 0.35 * (v - 0.5));
    add(Slot::NoiseGain, 0.9 * (v - 0.5));
    add(Slot::HpfCutoff, 0.6 * (v - 0.5) + uniform(-0.05, 0.05));
    add(Slot::ShaperDrive, 0.4 * (v - 0.5));
    add(Slot::Osc1FmAmount, 0.4 * v);
    add(Slot::NoiseAmpDecay, uniform(-0.15, 0.15));
    add(Slot::Osc1AmpDecay, uniform(-0.1, 0.1));
    add(Slot::FreqEnvDecay, uniform(-0.05, 0.05));
    add(Slot::Osc1Freq, uniform(-0.02, 0.02));
    RenderConfig cfg = rc;
    cfg.noise_seed = seed * 1000003ULL + h;
    const auto hit = render<double>(theta, ranges, cfg);
    const double level = 0.03 + 0.97 * v * v;
    const std::size_t start = lead + h * spacing + static_cast<std::size_t>(uniform(0.0, 0.05) * sample_rate);
    for (std::size_t i = 0; i < hit.size() && start + i < perf.audio.size(); ++i) perf.audio[start + i] += level * hit[i];
    perf.hit_starts.push_back(start);
    perf.velocities.push_back(v);
  }
  return perf;
}

}  // namespace drumremap
