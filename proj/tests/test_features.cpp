#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "drumremap/errors.hpp"
#include "drumremap/features.hpp"
#include "drumremap/synth.hpp"

using namespace drumremap;

namespace {

constexpr double kSr = 48000.0;

std::vector<double> sine(double f, std::size_t n, double amp = 1.0, double sr = kSr) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / sr);
  return x;
}

std::vector<double> white(std::size_t n, std::uint64_t seed, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

// Loudness per the broadcast standard with its published 48 kHz filter
// coefficients, written out independently of the library's derivation.
double reference_lkfs_48k(const std::vector<double>& x) {
  const double b1[3] = {1.53512485958697, -2.69169618940638, 1.19839281085285};
  const double a1[3] = {1.0, -1.69065929318241, 0.73248077421585};
  const double b2[3] = {1.0, -2.0, 1.0};
  const double a2[3] = {1.0, -1.99004745483398, 0.99007225036621};
  const auto filter = [](const std::vector<double>& in, const double* b, const double* a) {
    std::vector<double> out(in.size());
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double y = b[0] * in[i] + b[1] * x1 + b[2] * x2 - a[1] * y1 - a[2] * y2;
      x2 = x1;
      x1 = in[i];
      y2 = y1;
      y1 = y;
      out[i] = y;
    }
    return out;
  };
  const auto y = filter(filter(x, b1, a1), b2, a2);
  double ms = 0.0;
  for (double v : y) ms += v * v;
  ms /= static_cast<double>(y.size());
  return -0.691 + 10.0 * std::log10(ms);
}

// Compressed centroid of the first frame by a direct DFT over the
// zero-padded, flat-top windowed frame.
double direct_first_frame_centroid(const std::vector<double>& x, std::size_t frame, std::size_t nfft) {
  const double a[5] = {0.21557895, 0.41663158, 0.277263158, 0.083578947, 0.006947368};
  std::vector<double> w(frame);
  for (std::size_t i = 0; i < frame; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frame - 1);
    w[i] = a[0] - a[1] * std::cos(t) + a[2] * std::cos(2 * t) - a[3] * std::cos(3 * t) + a[4] * std::cos(4 * t);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      const double ph = -2.0 * std::numbers::pi * static_cast<double>(k * i % nfft) / static_cast<double>(nfft);
      re += x[i] * w[i] * std::cos(ph);
      im += x[i] * w[i] * std::sin(ph);
    }
    const double m = std::log1p(std::hypot(re, im));
    num += m * kSr * static_cast<double>(k) / static_cast<double>(nfft);
    den += m;
  }
  return num / den;
}

MagnitudeFrames<double> frames_of(const std::vector<double>& x) {
  return stft_frames<double>(x, FrameConfig{}, kSr, WindowKind::FlatTop, true);
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("frame arithmetic at 48 kHz") {
    const FrameConfig cfg;
    CHECK(cfg.frame_length(kSr) == 2227);
    CHECK(cfg.hop(kSr) == 557);
    CHECK(cfg.fft_size(kSr) == 4096);
    const auto layout = segment_transient_sustain(kSr, cfg, kSr);
    CHECK(static_cast<double>(layout.transient_end) / kSr == doctest::Approx(0.058).epsilon(0.01));
    CHECK_FALSE(layout.padded);
    CHECK(segment_transient_sustain(1000, cfg, kSr).padded);
    FrameConfig bad;
    bad.overlap = 1.0;
    CHECK_THROWS_AS(bad.validate(), DataError);
  }

  TEST_CASE("scaling functions") {
    CHECK(scale_sc(1000.0) == doctest::Approx(-34.61 * std::pow(1000.0, -0.1621) + 21.2985));
    CHECK(std::abs(scale_sc(1000.0) - 10.0) < 0.01);
    CHECK(scale_sf(1.0) == 0.0);
    CHECK(scale_sf(0.1) == doctest::Approx(-20.0));
    CHECK(scale_tc(0.1) == doctest::Approx(0.03));
    CHECK(scale_lkfs(0.0) == doctest::Approx(-120.691));
    CHECK_THROWS_AS(scale_sc(0.0), DomainError);
    CHECK_THROWS_AS(scale_sf(0.0), DomainError);
  }

  TEST_CASE("scalings are strictly increasing") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const double a = 20.0 + 20000.0 * u(rng), b = a * (1.0 + 0.01 + u(rng));
      CHECK(scale_sc(a) < scale_sc(b));
      const double fa = 0.001 + 0.9 * u(rng);
      CHECK(scale_sf(fa) < scale_sf(fa * 1.05));
      const double ta = 0.001 + u(rng);
      CHECK(scale_tc(ta) < scale_tc(ta * 1.05));
      const double ma = 1e-8 + u(rng);
      CHECK(scale_lkfs(ma) < scale_lkfs(ma * 1.05));
    }
  }

  TEST_CASE("K-weighting matches the published 48 kHz coefficients") {
    const auto k = KWeighting::for_rate(kSr);
    CHECK(k.shelf.b0 == doctest::Approx(1.53512485958697).epsilon(1e-6));
    CHECK(k.shelf.b1 == doctest::Approx(-2.69169618940638).epsilon(1e-6));
    CHECK(k.shelf.b2 == doctest::Approx(1.19839281085285).epsilon(1e-6));
    CHECK(k.shelf.a1 == doctest::Approx(-1.69065929318241).epsilon(1e-6));
    CHECK(k.shelf.a2 == doctest::Approx(0.73248077421585).epsilon(1e-6));
    CHECK(k.highpass.a1 == doctest::Approx(-1.99004745483398).epsilon(1e-6));
    CHECK(k.highpass.a2 == doctest::Approx(0.99007225036621).epsilon(1e-6));
  }

  TEST_CASE("loudness of the reference tone, silence and gain") {
    const auto tone = sine(997.0, 5 * 48000);
    const double ours = lkfs<double>(tone, kSr);
    const double ref = reference_lkfs_48k(tone);
    CHECK(std::abs(ours - (-3.01)) < 0.1);
    CHECK(std::abs(ref - (-3.01)) < 0.1);
    CHECK(ours == doctest::Approx(ref).epsilon(1e-4));

    const std::vector<double> silence(4800, 0.0);
    CHECK(lkfs<double>(silence, kSr) == doctest::Approx(-120.691));

    const auto half = sine(997.0, 48000, 0.5);
    CHECK(lkfs<double>(sine(997.0, 48000), kSr) - lkfs<double>(half, kSr) ==
          doctest::Approx(-10.0 * std::log10(0.25)).epsilon(1e-9));
  }

  TEST_CASE("magnitude frames") {
    const std::vector<double> zero(8000, 0.0);
    for (const auto& f : frames_of(zero).frames) {
      for (double m : f) REQUIRE(m == 0.0);
    }
    // 64 bins of 11.72 Hz: a bin-centred sine peaks at its bin.
    const double bin = kSr / 4096.0;
    const auto f = frames_of(sine(64 * bin, 8000)).frames[0];
    CHECK(std::max_element(f.begin(), f.end()) - f.begin() == 64);
    CHECK_THROWS_AS(frames_of(std::vector<double>(100, 0.1)), DataError);
  }

  TEST_CASE("spectral centroid oracles") {
    // Compression lifts the flat-top leakage floor relative to the peak, so
    // the closed-form tone checks run on raw magnitudes.
    const auto raw = [](const std::vector<double>& x) {
      return stft_frames<double>(x, FrameConfig{}, kSr, WindowKind::FlatTop, false);
    };
    CHECK(spectral_centroid(raw(sine(1000.0, 8000))) == doctest::Approx(1000.0).epsilon(0.02));
    auto pair = sine(500.0, 8000);
    const auto hi = sine(1500.0, 8000);
    for (std::size_t i = 0; i < pair.size(); ++i) pair[i] += hi[i];
    CHECK(spectral_centroid(raw(pair)) == doctest::Approx(1000.0).epsilon(0.05));

    const auto full = sine(1000.0, 2227);
    CHECK(spectral_centroid(frames_of(full)) ==
          doctest::Approx(direct_first_frame_centroid(full, 2227, 4096)).epsilon(1e-9));
    CHECK(spectral_centroid(frames_of(white(8000, 1))) == doctest::Approx(kSr / 4.0).epsilon(0.05));
    CHECK_THROWS_AS(spectral_centroid(frames_of(std::vector<double>(8000, 0.0))), SilentSegmentError);
  }

  TEST_CASE("spectral flatness oracles") {
    MagnitudeFrames<double> flat{16, kSr, {std::vector<double>(9, 0.7)}};
    CHECK(spectral_flatness(flat) == doctest::Approx(1.0));
    std::vector<double> single(9, 0.0);
    single[3] = 5.0;
    MagnitudeFrames<double> spike{16, kSr, {single}};
    CHECK(spectral_flatness(spike) < 1e-3);
    CHECK(spectral_flatness(frames_of(white(8000, 7))) > 0.5);
    CHECK(spectral_flatness(frames_of(sine(1000.0, 8000))) < 0.1);
  }

  TEST_CASE("temporal centroid oracles") {
    const FrameConfig cfg;
    // Symmetric envelope: raw centroid at the middle.
    const std::size_t n = 48000;
    std::vector<double> tri(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(n - 1);
      tri[i] = (1.0 - std::abs(2.0 * t - 1.0)) * (i % 2 ? 1.0 : -1.0);
    }
    CHECK(temporal_centroid_seconds<double>(tri, cfg, kSr) == doctest::Approx(0.5 * (n - 1) / kSr).epsilon(0.01));
    // The centroid weights frame RMS, so an amplitude decay exp(-t / tau)
    // over a long tail has its centroid near tau.
    const auto noise = white(3 * 48000, 3);
    std::vector<double> decay(noise.size());
    for (std::size_t i = 0; i < decay.size(); ++i) decay[i] = noise[i] * std::exp(-static_cast<double>(i) / kSr / 0.1);
    CHECK(temporal_centroid_seconds<double>(decay, cfg, kSr) == doctest::Approx(0.1).epsilon(0.15));
    CHECK_THROWS_AS(temporal_centroid<double>(std::vector<double>(8000, 0.0), cfg, kSr), SilentSegmentError);
  }

  TEST_CASE("feature vector: determinism, gain and noisiness") {
    const auto& preset = factory_presets()[0];
    const RenderConfig rc{0.5, kSr, 4};
    const auto hit = render<double>(preset.params.values(), ParamRangeTable(), rc);
    const FrameConfig cfg;
    const auto a = extract_feature_vector<double>(hit, cfg, kSr);
    CHECK(a == extract_feature_vector<double>(hit, cfg, kSr));
    CHECK(a[4] <= 0.0);
    CHECK(a[5] <= 0.0);
    CHECK(a[6] >= 0.0);

    std::vector<double> loud = hit;
    for (double& v : loud) v *= 2.0;
    const auto b = extract_feature_vector<double>(loud, cfg, kSr);
    CHECK(b[0] - a[0] == doctest::Approx(6.0206).epsilon(1e-4));
    CHECK(b[1] - a[1] == doctest::Approx(6.0206).epsilon(1e-4));
    CHECK(std::abs(b[2] - a[2]) < 0.1);
    CHECK(std::abs(b[3] - a[3]) < 0.1);
    // log(1 + X) flattens louder spectra a little: a few tenths of a dB.
    CHECK(std::abs(b[4] - a[4]) < 0.5);
    CHECK(std::abs(b[5] - a[5]) < 0.5);

    double prev = -1e9;
    for (int k = 0; k < 10; ++k) {
      auto theta = preset.params.values();
      theta[index(Slot::NoiseGain)] = 0.05 + 0.1 * k;
      const auto f = extract_feature_vector<double>(render<double>(theta, ParamRangeTable(), rc), cfg, kSr);
      CHECK(f[4] > prev);
      prev = f[4];
    }
  }

  TEST_CASE("short hits are padded and flagged") {
    const auto& preset = factory_presets()[1];
    const auto hit = render<double>(preset.params.values(), ParamRangeTable(), {0.1, kSr, 0});
    bool padded = false;
    const auto f = extract_feature_vector<double>(hit, FrameConfig{}, kSr, &padded);
    CHECK(padded);
    for (double v : f) CHECK(std::isfinite(v));
  }

  TEST_CASE("feature tangents match central differences") {
    const auto theta = factory_presets()[0].params.values();
    const RenderConfig rc{0.5, kSr, 2};
    const FrameConfig cfg;
    const auto dual = extract_feature_vector<DualValue>(
        std::span<const DualValue>(render<DualValue>(seed_params(theta), ParamRangeTable(), rc)), cfg, kSr);
    std::size_t checked = 0, agree = 0;
    for (std::size_t j = 0; j < kNumParams; ++j) {
      auto up = theta, down = theta;
      up[j] += 1e-5;
      down[j] -= 1e-5;
      const auto a = extract_feature_vector<double>(render<double>(up, ParamRangeTable(), rc), cfg, kSr);
      const auto b = extract_feature_vector<double>(render<double>(down, ParamRangeTable(), rc), cfg, kSr);
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        const double fd = (a[i] - b[i]) / 2e-5;
        if (std::abs(fd) < 1e-6) continue;
        ++checked;
        agree += std::abs(dual[i].tangent(j) - fd) <= 1e-3 * std::abs(fd);
      }
    }
    CHECK(checked > 60);
    CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(checked));
  }

  TEST_CASE("onset features") {
    OnsetAnalyzer analyzer(256, kSr);
    CHECK_FALSE(analyzer.analyze(std::vector<double>(256, 0.0)).has_value());
    CHECK_FALSE(analyzer.analyze(std::vector<double>(255, 0.1)).has_value());
    CHECK_THROWS_AS(onset_features(std::vector<double>(256, 0.0), kSr), SilentSegmentError);
    CHECK_THROWS_AS(onset_features(std::vector<double>(100, 0.3), kSr), std::invalid_argument);

    std::vector<double> square(256);
    for (std::size_t i = 0; i < square.size(); ++i) square[i] = (i / 8) % 2 ? 1.0 : -1.0;
    CHECK(onset_features(square, kSr).rms == doctest::Approx(1.0));

    const auto f = onset_features(sine(6000.0, 256), kSr);
    CHECK(f.spectral_centroid == doctest::Approx(6000.0).epsilon(0.10));
    CHECK(f.spectral_flatness >= 0.0);
    CHECK(f.spectral_flatness <= 1.0);
    const auto n = onset_features(white(256, 9), kSr);
    CHECK(n.spectral_flatness > f.spectral_flatness);
    CHECK(n.spectral_centroid <= kSr / 2.0);
  }
}
