#pragma once

// Differentiable TR-808 style snare voice.
//
// Two sine oscillators with a shared exponential pitch envelope, plus seeded
// white noise through a high-pass biquad. Each path has a gain and an
// exponential amplitude envelope; the sum drives a tanh waveshaper that is
// normalized by tanh(drive). Everything is templated on the number field so
// the same code renders audio and its Jacobian.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drumremap/autodiff.hpp"
#include "json.hpp"

namespace drumremap {

inline constexpr std::size_t kNumParams = 14;
using DualValue = Dual<kNumParams>;

template <class T>
using ParamArray = std::array<T, kNumParams>;

enum class Slot : std::size_t {
  Osc1Freq,
  Osc1FmAmount,
  Osc1Gain,
  Osc1AmpDecay,
  Osc2Freq,
  Osc2FmAmount,
  Osc2Gain,
  Osc2AmpDecay,
  FreqEnvDecay,
  NoiseGain,
  NoiseAmpDecay,
  HpfCutoff,
  HpfQ,
  ShaperDrive,
};

inline constexpr std::array<std::string_view, kNumParams> kSlotNames = {
    "osc1_freq",     "osc1_fm_amount",  "osc1_gain",  "osc1_amp_decay", "osc2_freq",
    "osc2_fm_amount", "osc2_gain",      "osc2_amp_decay", "freq_env_decay", "noise_gain",
    "noise_amp_decay", "hpf_cutoff",    "hpf_q",      "shaper_drive",
};

constexpr std::size_t index(Slot s) { return static_cast<std::size_t>(s); }
std::optional<Slot> slot_from_name(std::string_view name);

/// Normalized synthesizer parameters, every component in [0, 1].
class SynthParams {
 public:
  SynthParams() { values_.fill(0.5); }
  explicit SynthParams(const ParamArray<double>& values);

  double operator[](Slot s) const { return values_[index(s)]; }
  double& operator[](Slot s) { return values_[index(s)]; }
  const ParamArray<double>& values() const { return values_; }

 private:
  ParamArray<double> values_{};
};

/// clamp(theta_pre + theta_mod, 0, 1), componentwise in normalized space.
template <class T>
ParamArray<T> apply_modulation(const SynthParams& theta_pre, const ParamArray<T>& theta_mod) {
  ParamArray<T> out;
  for (std::size_t i = 0; i < kNumParams; ++i) out[i] = clamp_unit(theta_mod[i] + theta_pre.values()[i]);
  return out;
}
SynthParams apply_modulation(const SynthParams& theta_pre, const ParamArray<double>& theta_mod);

enum class Curve { Linear, Exponential };

struct ParamRange {
  double min = 0.0;
  double max = 1.0;
  Curve curve = Curve::Linear;

  template <class T>
  T to_physical(const T& u) const {
    if (curve == Curve::Linear) return u * (max - min) + min;
    return exp(u * std::log(max / min)) * min;
  }
  double to_normalized(double physical) const;
};

/// Per-slot physical ranges. Defaults bracket the TR-808 snare's resonances.
class ParamRangeTable {
 public:
  ParamRangeTable();  // defaults
  explicit ParamRangeTable(const std::array<ParamRange, kNumParams>& ranges);

  const ParamRange& operator[](Slot s) const { return ranges_[index(s)]; }
  const std::array<ParamRange, kNumParams>& ranges() const { return ranges_; }

 private:
  std::array<ParamRange, kNumParams> ranges_;
};

template <class T>
struct PhysicalParams {
  std::array<T, 2> osc_freq;
  std::array<T, 2> fm_amount;
  std::array<T, 2> gain;
  std::array<T, 2> amp_decay;
  T freq_env_decay;
  T noise_gain;
  T noise_amp_decay;
  T hpf_cutoff;
  T hpf_q;
  T drive;
};

template <class T>
PhysicalParams<T> denormalize(const ParamArray<T>& theta, const ParamRangeTable& ranges) {
  auto map = [&](Slot s) { return ranges[s].to_physical(theta[index(s)]); };
  return PhysicalParams<T>{
      {map(Slot::Osc1Freq), map(Slot::Osc2Freq)},
      {map(Slot::Osc1FmAmount), map(Slot::Osc2FmAmount)},
      {map(Slot::Osc1Gain), map(Slot::Osc2Gain)},
      {map(Slot::Osc1AmpDecay), map(Slot::Osc2AmpDecay)},
      map(Slot::FreqEnvDecay),
      map(Slot::NoiseGain),
      map(Slot::NoiseAmpDecay),
      map(Slot::HpfCutoff),
      map(Slot::HpfQ),
      map(Slot::ShaperDrive),
  };
}

struct Preset {
  std::string name;
  SynthParams params;
};

nlohmann::json to_json(const Preset& preset);
Preset preset_from_json(const nlohmann::json& j);
Preset load_preset(const std::filesystem::path& path);
void save_preset(const Preset& preset, const std::filesystem::path& path);

nlohmann::json to_json(const ParamRangeTable& table);
ParamRangeTable range_table_from_json(const nlohmann::json& j);
ParamRangeTable load_range_table(const std::filesystem::path& path);

/// The five bundled presets, identical to the files under data/presets.
std::vector<Preset> factory_presets();

// ---------------------------------------------------------------------------
// Envelopes

/// Per-sample multiplier of an envelope that falls by 60 dB over `decay_s`.
template <class T>
T decay_per_sample(const T& decay_s, double sample_rate) {
  if (!(value_of(decay_s) > 0.0)) throw DomainError("decay time must be positive");
  return exp(-std::log(1000.0) / (decay_s * sample_rate));
}

/// e[t] = exp(-t / (sr * tau)) with tau = decay / ln(1000).
std::vector<double> exp_envelope(double decay_s, std::size_t n, double sample_rate);

// ---------------------------------------------------------------------------
// Filters

template <class T>
struct BiquadCoefficients {
  T b0, b1, b2, a1, a2;  // a0 normalized to 1
};

/// Audio-cookbook second-order high-pass.
template <class T>
BiquadCoefficients<T> highpass_coefficients(const T& cutoff, const T& q, double sample_rate) {
  const double fc = value_of(cutoff);
  if (!(fc > 0.0 && fc < sample_rate / 2.0)) throw DomainError("high-pass cutoff must lie in (0, sr/2)");
  if (!(value_of(q) > 0.0)) throw DomainError("high-pass q must be positive");
  const T w0 = cutoff * (2.0 * std::numbers::pi / sample_rate);
  const T cw = cos(w0);
  const T alpha = sin(w0) / (q * 2.0);
  const T a0 = alpha + 1.0;
  const T inv_a0 = reciprocal(a0);
  const T b0 = (cw + 1.0) * 0.5 * inv_a0;
  return {b0, -(cw + 1.0) * inv_a0, b0, cw * -2.0 * inv_a0, (1.0 - alpha) * inv_a0};
}

/// Direct form I, so tangents flow through the recursion. `In` may be a
/// plain double when the input carries no tangent.
template <class T, class In = T>
class Biquad {
 public:
  explicit Biquad(const BiquadCoefficients<T>& c) : c_(c) {}

  T process(const In& x) {
    T y = c_.b0 * x + c_.b1 * x1_ + c_.b2 * x2_ - c_.a1 * y1_ - c_.a2 * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  BiquadCoefficients<T> c_;
  In x1_{}, x2_{};
  T y1_{}, y2_{};
};

template <class T>
std::vector<T> biquad_hpf(std::span<const T> signal, const T& cutoff, const T& q, double sample_rate) {
  Biquad<T> filter(highpass_coefficients(cutoff, q, sample_rate));
  std::vector<T> out;
  out.reserve(signal.size());
  for (const auto& x : signal) out.push_back(filter.process(x));
  return out;
}

// ---------------------------------------------------------------------------
// Voice

/// Uniform white noise in [-1, 1] from a fixed-seed generator.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}
  double next() {
    // 53 random bits, independent of the standard library's distributions.
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
  }

 private:
  std::mt19937_64 engine_;
};

struct RenderConfig {
  double duration_s = 1.0;
  double sample_rate = 48000.0;
  std::uint64_t noise_seed = 0;
};

/// One snare hit rendered sample by sample. The offline renderer and the
/// real-time engine both run this class, so their outputs agree exactly.
template <class T>
class SnareVoice {
 public:
  SnareVoice(const ParamArray<T>& theta, const ParamRangeTable& ranges, double sample_rate,
             std::uint64_t noise_seed)
      : noise_(noise_seed), hpf_(init(theta, ranges, sample_rate)) {}

  T next() {
    T mix = (gain_[0] * amp_env_[0]) * sin(phase_[0]) + (gain_[1] * amp_env_[1]) * sin(phase_[1]);
    const T filtered = hpf_.process(noise_.next());
    mix += (noise_gain_ * noise_env_) * filtered;
    const T out = tanh(drive_ * mix) * inv_tanh_drive_;

    for (std::size_t i = 0; i < 2; ++i) {
      phase_[i] += phase_step_[i] * (fm_amount_[i] * freq_env_ + 1.0);
      if (value_of(phase_[i]) >= kTwoPi) phase_[i] -= kTwoPi;
      amp_env_[i] *= amp_decay_[i];
    }
    noise_env_ *= noise_decay_;
    freq_env_ *= freq_decay_;
    ++position_;
    return out;
  }

  /// Upper estimate of |output| from here on, used to reclaim finished voices.
  double level_bound() const {
    const double drive = value_of(drive_);
    const double sum = value_of(gain_[0]) * value_of(amp_env_[0]) +
                       value_of(gain_[1]) * value_of(amp_env_[1]) +
                       value_of(noise_gain_) * value_of(noise_env_) * noise_peak_gain_;
    return drive * sum * value_of(inv_tanh_drive_);
  }

  std::size_t position() const { return position_; }

 private:
  static constexpr double kTwoPi = 2.0 * std::numbers::pi;

  BiquadCoefficients<T> init(const ParamArray<T>& theta, const ParamRangeTable& ranges, double sr) {
    ParamArray<T> clamped;
    for (std::size_t i = 0; i < kNumParams; ++i) clamped[i] = clamp_unit(theta[i]);
    const auto p = denormalize(clamped, ranges);
    for (std::size_t i = 0; i < 2; ++i) {
      phase_step_[i] = p.osc_freq[i] * (kTwoPi / sr);
      fm_amount_[i] = p.fm_amount[i];
      gain_[i] = p.gain[i];
      amp_decay_[i] = decay_per_sample(p.amp_decay[i], sr);
      amp_env_[i] = T(1.0);
      phase_[i] = T(0.0);
    }
    freq_decay_ = decay_per_sample(p.freq_env_decay, sr);
    freq_env_ = T(1.0);
    noise_gain_ = p.noise_gain;
    noise_decay_ = decay_per_sample(p.noise_amp_decay, sr);
    noise_env_ = T(1.0);
    drive_ = p.drive;
    inv_tanh_drive_ = reciprocal(tanh(p.drive));
    // Resonant peak of the high-pass magnitude response, doubled for slack.
    const double q = value_of(p.hpf_q);
    noise_peak_gain_ = 2.0 * (q > std::numbers::sqrt2 / 2.0 ? q / std::sqrt(1.0 - 1.0 / (4.0 * q * q)) : 1.0);
    return highpass_coefficients(p.hpf_cutoff, p.hpf_q, sr);
  }

  NoiseSource noise_;
  std::array<T, 2> phase_{}, phase_step_{}, fm_amount_{}, gain_{}, amp_env_{}, amp_decay_{};
  T freq_env_{}, freq_decay_{}, noise_gain_{}, noise_env_{}, noise_decay_{}, drive_{}, inv_tanh_drive_{};
  double noise_peak_gain_ = 1.0;
  Biquad<T, double> hpf_;
  std::size_t position_ = 0;
};

std::size_t render_length(const RenderConfig& cfg);

template <class T>
std::vector<T> render(const ParamArray<T>& theta, const ParamRangeTable& ranges, const RenderConfig& cfg) {
  const std::size_t n = render_length(cfg);
  SnareVoice<T> voice(theta, ranges, cfg.sample_rate, cfg.noise_seed);
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(voice.next());
  return out;
}

/// Normalized parameters seeded as the 14 differentiation directions.
inline ParamArray<DualValue> seed_params(const ParamArray<double>& theta) {
  ParamArray<DualValue> out;
  for (std::size_t i = 0; i < kNumParams; ++i) out[i] = DualValue::lift(theta[i], i);
  return out;
}

}  // namespace drumremap
