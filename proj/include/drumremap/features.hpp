#pragma once

// Timbre and dynamics features of a single drum hit.
//
// The hit is split into a transient segment (the first N_t analysis frames)
// and a sustain segment (the following N_s frames). Loudness, spectral
// centroid and spectral flatness are measured on each segment, temporal
// centroid over the whole hit, and every value is mapped onto a perceptual
// scale. The extractor is generic over the number field, so a synthesized
// input carrying tangents yields feature tangents.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "drumremap/autodiff.hpp"
#include "drumremap/errors.hpp"
#include "drumremap/fft.hpp"
#include "drumremap/synth.hpp"
#include "json.hpp"

namespace drumremap {

inline constexpr std::size_t kNumFeatures = 7;

template <class T>
using FeatureArray = std::array<T, kNumFeatures>;

enum class Feature : std::size_t { LkfsT, LkfsS, ScT, ScS, SfT, SfS, Tc };
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {"LKFS_T", "LKFS_S", "SC_T", "SC_S",
                                                                        "SF_T",   "SF_S",   "TC"};

struct FrameConfig {
  double window_ms = 46.4;
  double overlap = 0.75;
  double tc_window_ms = 125.0;
  std::size_t n_transient_frames = 2;
  std::size_t n_sustain_frames = 8;

  void validate() const;
  std::size_t frame_length(double sample_rate) const;
  std::size_t hop(double sample_rate) const;
  std::size_t fft_size(double sample_rate) const { return next_power_of_two(frame_length(sample_rate)); }
  std::size_t tc_window(double sample_rate) const;
  std::size_t tc_hop(double sample_rate) const;
};

nlohmann::json to_json(const FrameConfig& cfg);
FrameConfig frame_config_from_json(const nlohmann::json& j);

enum class WindowKind { FlatTop, Hann };

/// Symmetric window of length n.
std::vector<double> make_window(WindowKind kind, std::size_t n);

// ---------------------------------------------------------------------------
// Psychophysical scalings

/// Spectral centroid in Hz onto an interval scale of brightness.
template <class T>
T scale_sc(const T& hz) {
  if (!(value_of(hz) > 0.0)) throw DomainError("spectral centroid must be positive");
  return pow(hz, -0.1621) * -34.61 + 21.2985;
}

/// Flatness ratio in decibels.
template <class T>
T scale_sf(const T& flatness) {
  if (!(value_of(flatness) > 0.0)) throw DomainError("flatness must be positive");
  return log10(flatness) * 20.0;
}

/// Mean square of a K-weighted signal in LKFS. The 1e-12 floor maps silence to -120.
template <class T>
T scale_lkfs(const T& mean_square) {
  return log10(mean_square + 1e-12) * 10.0 - 0.691;
}

/// Temporal centroid, measured in seconds, expressed in units of 100 ms and
/// raised to the power 1.864.
template <class T>
T scale_tc(const T& seconds) {
  return pow(seconds * 10.0, 1.864) * 0.03;
}

// ---------------------------------------------------------------------------
// Frames and spectral statistics

template <class T>
struct MagnitudeFrames {
  std::size_t fft_size = 0;
  double sample_rate = 0.0;
  std::vector<std::vector<T>> frames;  // fft_size / 2 + 1 bins each
};

/// Windowed magnitude spectra of frames [first, first + count). With
/// `compress`, magnitudes are mapped through log(1 + X).
template <class T>
MagnitudeFrames<T> stft_frames(std::span<const T> signal, const FrameConfig& cfg, double sample_rate,
                               WindowKind kind, bool compress = true, std::size_t first = 0,
                               std::optional<std::size_t> count = std::nullopt) {
  const std::size_t frame = cfg.frame_length(sample_rate);
  const std::size_t hop = cfg.hop(sample_rate);
  if (signal.size() < frame) throw DataError("signal shorter than one analysis window");
  const std::size_t available = 1 + (signal.size() - frame) / hop;
  const std::size_t n = count.value_or(available > first ? available - first : 0);
  if (first + n > available) throw DataError("signal too short for the requested frames");

  MagnitudeFrames<T> out;
  out.fft_size = cfg.fft_size(sample_rate);
  out.sample_rate = sample_rate;
  const auto window = make_window(kind, frame);
  std::vector<T> buffer(frame);
  for (std::size_t f = first; f < first + n; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < frame; ++i) buffer[i] = signal[start + i] * window[i];
    const auto spec = spectrum(std::span<const T>(buffer), out.fft_size);
    std::vector<T> mags(spec.size());
    for (std::size_t b = 0; b < spec.size(); ++b) {
      mags[b] = compress ? log1p(magnitude(spec[b])) : magnitude(spec[b]);
    }
    out.frames.push_back(std::move(mags));
  }
  return out;
}

namespace detail {

template <class T>
std::optional<T> frame_centroid(std::span<const T> mags, double bin_hz) {
  T weighted{};
  T total{};
  for (std::size_t b = 0; b < mags.size(); ++b) {
    weighted += mags[b] * (bin_hz * static_cast<double>(b));
    total += mags[b];
  }
  if (value_of(total) == 0.0) return std::nullopt;
  return weighted / total;
}

template <class T>
std::optional<T> frame_flatness(std::span<const T> mags) {
  constexpr double kFloor = 1e-10;
  double energy = 0.0;
  T log_sum{};
  T sum{};
  for (const auto& m : mags) {
    energy += value_of(m);
    const T floored = max(m, kFloor);
    log_sum += log(floored);
    sum += floored;
  }
  if (energy == 0.0) return std::nullopt;
  const double n = static_cast<double>(mags.size());
  return exp(log_sum / n) / (sum / n);
}

template <class T, class Fn>
T mean_over_frames(const MagnitudeFrames<T>& frames, std::size_t first, std::size_t count, Fn&& per_frame) {
  T acc{};
  std::size_t used = 0;
  for (std::size_t f = first; f < first + count; ++f) {
    if (auto v = per_frame(std::span<const T>(frames.frames[f]))) {
      acc += *v;
      ++used;
    }
  }
  if (used == 0) throw SilentSegmentError();
  return acc / static_cast<double>(used);
}

}  // namespace detail

/// Mean spectral centroid in Hz over frames [first, first + count); silent frames are skipped.
template <class T>
T spectral_centroid(const MagnitudeFrames<T>& frames, std::size_t first, std::size_t count) {
  const double bin_hz = frames.sample_rate / static_cast<double>(frames.fft_size);
  return detail::mean_over_frames(frames, first, count,
                                  [&](std::span<const T> m) { return detail::frame_centroid(m, bin_hz); });
}
template <class T>
T spectral_centroid(const MagnitudeFrames<T>& frames) {
  return spectral_centroid(frames, 0, frames.frames.size());
}

/// Mean geometric-to-arithmetic mean ratio; bins are floored at 1e-10.
template <class T>
T spectral_flatness(const MagnitudeFrames<T>& frames, std::size_t first, std::size_t count) {
  return detail::mean_over_frames(frames, first, count,
                                  [](std::span<const T> m) { return detail::frame_flatness(m); });
}
template <class T>
T spectral_flatness(const MagnitudeFrames<T>& frames) {
  return spectral_flatness(frames, 0, frames.frames.size());
}

// ---------------------------------------------------------------------------
// Loudness

/// Two-stage K-weighting pre-filter, coefficients derived for any sample rate.
struct KWeighting {
  BiquadCoefficients<double> shelf;
  BiquadCoefficients<double> highpass;
  static KWeighting for_rate(double sample_rate);
};

std::vector<double> k_weight(std::span<const double> signal, double sample_rate);

// The filter is linear with constant coefficients, so the value and every
// tangent lane run through identical, independent filters.
template <std::size_t N>
std::vector<Dual<N>> k_weight(std::span<const Dual<N>> signal, double sample_rate) {
  const auto kw = KWeighting::for_rate(sample_rate);
  const std::size_t n = signal.size();
  std::vector<double> lanes((N + 1) * n);
  for (std::size_t k = 0; k <= N; ++k) {
    Biquad<double> shelf(kw.shelf);
    Biquad<double> hp(kw.highpass);
    double* lane = lanes.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = k == 0 ? signal[i].value() : signal[i].tangent(k - 1);
      lane[i] = hp.process(shelf.process(x));
    }
  }
  std::vector<Dual<N>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    typename Dual<N>::Tangent t;
    for (std::size_t k = 0; k < N; ++k) t[k] = lanes[(k + 1) * n + i];
    out[i] = Dual<N>(lanes[i], t);
  }
  return out;
}

template <class T>
T mean_square(std::span<const T> x) {
  if (x.empty()) throw DataError("empty segment");
  T acc{};
  for (const auto& v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

/// Loudness of a segment: K-weight, mean square, then -0.691 + 10 log10.
template <class T>
T lkfs(std::span<const T> segment, double sample_rate) {
  if (segment.empty()) throw DataError("empty segment");
  const auto weighted = k_weight(segment, sample_rate);
  return scale_lkfs(mean_square(std::span<const T>(weighted)));
}

// ---------------------------------------------------------------------------
// Temporal centroid

namespace detail {
template <class T>
T root_or_zero(const T& x) {
  return value_of(x) > 0.0 ? sqrt(x) : T{};
}
}  // namespace detail

/// Energy-weighted mean time in seconds. RMS is taken over 125 ms windows
/// centred on multiples of the hop (the signal is zero-padded half a window on
/// both sides).
template <class T>
T temporal_centroid_seconds(std::span<const T> signal, const FrameConfig& cfg, double sample_rate) {
  const std::size_t win = cfg.tc_window(sample_rate);
  const std::size_t hop = cfg.tc_hop(sample_rate);
  const std::size_t half = win / 2;
  const std::size_t n = signal.size();
  T weighted{};
  T total{};
  for (std::size_t center = 0; center < n; center += hop) {
    const std::size_t begin = center > half ? center - half : 0;
    const std::size_t end = std::min(n, center + (win - half));
    T acc{};
    for (std::size_t i = begin; i < end; ++i) acc += signal[i] * signal[i];
    const T rms = detail::root_or_zero(acc / static_cast<double>(win));
    weighted += rms * (static_cast<double>(center) / sample_rate);
    total += rms;
  }
  if (value_of(total) == 0.0) throw SilentSegmentError();
  return weighted / total;
}

template <class T>
T temporal_centroid(std::span<const T> signal, const FrameConfig& cfg, double sample_rate) {
  return scale_tc(temporal_centroid_seconds(signal, cfg, sample_rate));
}

// ---------------------------------------------------------------------------
// Segmentation and the full feature vector

struct SegmentLayout {
  std::size_t frame_length = 0;
  std::size_t hop = 0;
  std::size_t transient_frames = 0;  // frames [0, transient_frames)
  std::size_t sustain_frames = 0;    // frames [transient_frames, transient_frames + sustain_frames)
  std::size_t transient_begin = 0, transient_end = 0;  // sample ranges covered by the frames
  std::size_t sustain_begin = 0, sustain_end = 0;
  std::size_t min_length = 0;
  bool padded = false;  // the signal was shorter than min_length
};

SegmentLayout segment_transient_sustain(std::size_t signal_length, const FrameConfig& cfg, double sample_rate);

/// (lkfs_t, lkfs_s, sc_t, sc_s, sf_t, sf_s, tc), each on its perceptual scale.
template <class T>
FeatureArray<T> extract_feature_vector(std::span<const T> signal, const FrameConfig& cfg, double sample_rate,
                                       bool* padded = nullptr) {
  const auto layout = segment_transient_sustain(signal.size(), cfg, sample_rate);
  if (padded != nullptr) *padded = layout.padded;
  std::vector<T> storage;
  if (layout.padded) {
    storage.assign(signal.begin(), signal.end());
    storage.resize(layout.min_length, T{});
    signal = storage;
  }

  const auto weighted = k_weight(signal.first(layout.sustain_end), sample_rate);
  const std::span<const T> kw(weighted);
  const auto frames = stft_frames(signal, cfg, sample_rate, WindowKind::FlatTop, true, 0,
                                  layout.transient_frames + layout.sustain_frames);
  const std::size_t nt = layout.transient_frames;
  const std::size_t ns = layout.sustain_frames;

  FeatureArray<T> f;
  f[0] = scale_lkfs(mean_square(kw.subspan(layout.transient_begin, layout.transient_end - layout.transient_begin)));
  f[1] = scale_lkfs(mean_square(kw.subspan(layout.sustain_begin, layout.sustain_end - layout.sustain_begin)));
  f[2] = scale_sc(spectral_centroid(frames, 0, nt));
  f[3] = scale_sc(spectral_centroid(frames, nt, ns));
  f[4] = scale_sf(spectral_flatness(frames, 0, nt));
  f[5] = scale_sf(spectral_flatness(frames, nt, ns));
  f[6] = temporal_centroid(signal, cfg, sample_rate);
  return f;
}

inline FeatureArray<double> values_of(const FeatureArray<DualValue>& f) {
  FeatureArray<double> out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = f[i].value();
  return out;
}

// ---------------------------------------------------------------------------
// Onset features

struct OnsetFeatures {
  double rms = 0.0;
  double spectral_centroid = 0.0;  // Hz
  double spectral_flatness = 0.0;  // ratio in [0, 1]

  std::array<double, 3> as_array() const { return {rms, spectral_centroid, spectral_flatness}; }
};

/// Cheap features of the short buffer that follows an onset. Buffers are
/// analysed with a Hann window and an uncompressed magnitude spectrum.
/// Construction allocates; analyze() does not.
class OnsetAnalyzer {
 public:
  OnsetAnalyzer(std::size_t length, double sample_rate);

  std::size_t length() const { return length_; }

  /// nullopt for an all-zero buffer (centroid undefined) or a length mismatch.
  std::optional<OnsetFeatures> analyze(std::span<const double> buffer);

 private:
  std::size_t length_;
  double sample_rate_;
  std::vector<double> window_;
  RealFft fft_;
};

/// Throws std::invalid_argument on a wrong length and SilentSegmentError on silence.
OnsetFeatures onset_features(std::span<const double> buffer, double sample_rate, std::size_t expected_length = 256);

}  // namespace drumremap
