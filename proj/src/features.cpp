#include "drumremap/features.hpp"

#include <algorithm>
#include <stdexcept>

namespace drumremap {

void FrameConfig::validate() const {
  if (!(window_ms > 0.0)) throw DataError("window_ms must be positive");
  if (!(overlap > 0.0 && overlap < 1.0)) throw DataError("overlap must lie in (0, 1)");
  if (!(tc_window_ms > 0.0)) throw DataError("tc_window_ms must be positive");
  if (n_transient_frames < 1 || n_sustain_frames < 1) throw DataError("segment frame counts must be >= 1");
}

std::size_t FrameConfig::frame_length(double sample_rate) const {
  return static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
}

std::size_t FrameConfig::hop(double sample_rate) const {
  const auto h = std::llround(static_cast<double>(frame_length(sample_rate)) * (1.0 - overlap));
  return static_cast<std::size_t>(std::max<long long>(1, h));
}

std::size_t FrameConfig::tc_window(double sample_rate) const {
  return static_cast<std::size_t>(std::llround(tc_window_ms * sample_rate / 1000.0));
}

std::size_t FrameConfig::tc_hop(double sample_rate) const {
  const auto h = std::llround(static_cast<double>(tc_window(sample_rate)) * (1.0 - overlap));
  return static_cast<std::size_t>(std::max<long long>(1, h));
}

nlohmann::json to_json(const FrameConfig& cfg) {
  return {{"window_ms", cfg.window_ms},
          {"overlap", cfg.overlap},
          {"tc_window_ms", cfg.tc_window_ms},
          {"n_transient_frames", cfg.n_transient_frames},
          {"n_sustain_frames", cfg.n_sustain_frames}};
}

FrameConfig frame_config_from_json(const nlohmann::json& j) {
  FrameConfig cfg;
  try {
    cfg.window_ms = j.at("window_ms").get<double>();
    cfg.overlap = j.at("overlap").get<double>();
    cfg.tc_window_ms = j.at("tc_window_ms").get<double>();
    cfg.n_transient_frames = j.at("n_transient_frames").get<std::size_t>();
    cfg.n_sustain_frames = j.at("n_sustain_frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("frame config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 2.0 * std::numbers::pi * static_cast<double>(i) / denom;
    if (kind == WindowKind::Hann) {
      w[i] = 0.5 - 0.5 * std::cos(x);
    } else {
      w[i] = 0.21557895 - 0.41663158 * std::cos(x) + 0.277263158 * std::cos(2.0 * x) -
             0.083578947 * std::cos(3.0 * x) + 0.006947368 * std::cos(4.0 * x);
    }
  }
  return w;
}

KWeighting KWeighting::for_rate(double sample_rate) {
  // Pre-filter (high shelf) and RLB high-pass, re-derived from their analog
  // prototypes so any session rate is supported.
  KWeighting kw{};
  {
    const double f0 = 1681.974450955533;
    const double gain_db = 3.999843853973347;
    const double q = 0.7071752369554196;
    const double k = std::tan(std::numbers::pi * f0 / sample_rate);
    const double vh = std::pow(10.0, gain_db / 20.0);
    const double vb = std::pow(vh, 0.4996667741545416);
    const double a0 = 1.0 + k / q + k * k;
    kw.shelf = {(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0,
                2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  {
    const double f0 = 38.13547087602444;
    const double q = 0.5003270373238773;
    const double k = std::tan(std::numbers::pi * f0 / sample_rate);
    const double a0 = 1.0 + k / q + k * k;
    kw.highpass = {1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  }
  return kw;
}

std::vector<double> k_weight(std::span<const double> signal, double sample_rate) {
  const auto kw = KWeighting::for_rate(sample_rate);
  Biquad<double> shelf(kw.shelf);
  Biquad<double> hp(kw.highpass);
  std::vector<double> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = hp.process(shelf.process(signal[i]));
  return out;
}

SegmentLayout segment_transient_sustain(std::size_t signal_length, const FrameConfig& cfg, double sample_rate) {
  cfg.validate();
  SegmentLayout s;
  s.frame_length = cfg.frame_length(sample_rate);
  s.hop = cfg.hop(sample_rate);
  s.transient_frames = cfg.n_transient_frames;
  s.sustain_frames = cfg.n_sustain_frames;
  s.transient_begin = 0;
  s.transient_end = (s.transient_frames - 1) * s.hop + s.frame_length;
  s.sustain_begin = s.transient_frames * s.hop;
  s.sustain_end = (s.transient_frames + s.sustain_frames - 1) * s.hop + s.frame_length;
  s.min_length = std::max(s.sustain_end, cfg.tc_window(sample_rate));
  s.padded = signal_length < s.min_length;
  return s;
}

OnsetAnalyzer::OnsetAnalyzer(std::size_t length, double sample_rate)
    : length_(length),
      sample_rate_(sample_rate),
      window_(make_window(WindowKind::Hann, length)),
      fft_(next_power_of_two(length)) {
  if (length == 0) throw std::invalid_argument("onset window must be non-empty");
}

std::optional<OnsetFeatures> OnsetAnalyzer::analyze(std::span<const double> buffer) {
  if (buffer.size() != length_) return std::nullopt;
  double energy = 0.0;
  const auto input = fft_.input();
  for (std::size_t i = 0; i < length_; ++i) {
    energy += buffer[i] * buffer[i];
    input[i] = buffer[i] * window_[i];
  }
  fft_.execute();

  constexpr double kFloor = 1e-10;
  const double bin_hz = sample_rate_ / static_cast<double>(fft_.size());
  double weighted = 0.0;
  double total = 0.0;
  double log_sum = 0.0;
  double floored_sum = 0.0;
  const auto spectrum = fft_.output();
  for (std::size_t b = 0; b < spectrum.size(); ++b) {
    const double m = std::abs(spectrum[b]);
    weighted += m * bin_hz * static_cast<double>(b);
    total += m;
    const double f = std::max(m, kFloor);
    log_sum += std::log(f);
    floored_sum += f;
  }
  if (total == 0.0) return std::nullopt;
  const double bins = static_cast<double>(spectrum.size());
  OnsetFeatures out;
  out.rms = std::sqrt(energy / static_cast<double>(length_));
  out.spectral_centroid = weighted / total;
  out.spectral_flatness = std::exp(log_sum / bins) / (floored_sum / bins);
  return out;
}

OnsetFeatures onset_features(std::span<const double> buffer, double sample_rate, std::size_t expected_length) {
  if (buffer.size() != expected_length) {
    throw std::invalid_argument("onset buffer has " + std::to_string(buffer.size()) + " samples, expected " +
                                std::to_string(expected_length));
  }
  OnsetAnalyzer analyzer(expected_length, sample_rate);
  auto f = analyzer.analyze(buffer);
  if (!f) throw SilentSegmentError();
  return *f;
}

}  // namespace drumremap
