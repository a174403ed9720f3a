#pragma once

// Real-input FFTs for plain and dual signals, backed by FFTW.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "drumremap/autodiff.hpp"

namespace drumremap {

template <class T>
struct Complex {
  T re{};
  T im{};
};

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

constexpr std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// A planned batch of `count` real transforms of length `size` with its own
/// SIMD-aligned buffers.
///
/// Contiguous layout: the input holds `count` blocks of `size` doubles and the
/// output `count` blocks of `size / 2 + 1` bins. Interleaved layout: element n
/// of transform k sits at n * count + k on both sides. Construction plans and
/// allocates; execute() neither allocates nor locks. One instance must not be
/// executed from two threads at once.
class RealFft {
 public:
  enum class Layout { Contiguous, Interleaved };

  explicit RealFft(std::size_t size, std::size_t count = 1, Layout layout = Layout::Contiguous);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&& other) noexcept;
  RealFft& operator=(RealFft&& other) noexcept;

  std::size_t size() const { return size_; }
  std::size_t count() const { return count_; }
  std::size_t bins() const { return size_ / 2 + 1; }

  std::span<double> input() { return {input_, size_ * count_}; }
  std::span<const std::complex<double>> output() const { return {output_, bins() * count_}; }
  void execute();

  /// Per-thread instance for (size, count), reused across calls.
  static RealFft& scratch(std::size_t size, std::size_t count = 1, Layout layout = Layout::Contiguous);

 private:
  std::size_t size_ = 0;
  std::size_t count_ = 0;
  Layout layout_ = Layout::Contiguous;
  void* plan_ = nullptr;  // fftw_plan, owned by the process-wide plan cache
  double* input_ = nullptr;
  std::complex<double>* output_ = nullptr;
};

/// FFT of a real signal zero-padded to `size` (a power of two >= signal length).
std::vector<Complex<double>> rfft(std::span<const double> signal, std::size_t size);

/// FFT of a dual signal. The value part is the FFT of the values and each
/// tangent coordinate is the FFT of that coordinate's sequence.
template <std::size_t N>
std::vector<Complex<Dual<N>>> dual_rfft(std::span<const Dual<N>> signal, std::size_t size) {
  if (!is_power_of_two(size)) throw std::invalid_argument("FFT size must be a power of two");
  if (signal.size() > size) throw std::invalid_argument("FFT size smaller than signal");
  constexpr std::size_t lanes = N + 1;
  RealFft& fft = RealFft::scratch(size, lanes, RealFft::Layout::Interleaved);
  auto in = fft.input();
  for (std::size_t n = 0; n < signal.size(); ++n) {
    double* row = in.data() + n * lanes;
    row[0] = signal[n].value();
    const auto& t = signal[n].tangent();
    std::copy(t.begin(), t.end(), row + 1);
  }
  std::fill(in.begin() + static_cast<std::ptrdiff_t>(signal.size() * lanes), in.end(), 0.0);
  fft.execute();
  const auto spectra = fft.output();

  std::vector<Complex<Dual<N>>> out(fft.bins());
  for (std::size_t b = 0; b < out.size(); ++b) {
    const std::complex<double>* row = spectra.data() + b * lanes;
    typename Dual<N>::Tangent tre;
    typename Dual<N>::Tangent tim;
    for (std::size_t k = 0; k < N; ++k) {
      tre[k] = row[k + 1].real();
      tim[k] = row[k + 1].imag();
    }
    out[b].re = Dual<N>(row[0].real(), tre);
    out[b].im = Dual<N>(row[0].imag(), tim);
  }
  return out;
}

inline std::vector<Complex<double>> spectrum(std::span<const double> signal, std::size_t size) {
  return rfft(signal, size);
}
template <std::size_t N>
std::vector<Complex<Dual<N>>> spectrum(std::span<const Dual<N>> signal, std::size_t size) {
  return dual_rfft<N>(signal, size);
}

inline double magnitude(const Complex<double>& z) { return std::hypot(z.re, z.im); }

/// |z| with tangent Re(conj(z) dz) / |z|; a zero bin gets a zero tangent.
template <std::size_t N>
Dual<N> magnitude(const Complex<Dual<N>>& z) {
  const double re = z.re.value();
  const double im = z.im.value();
  const double m = std::hypot(re, im);
  typename Dual<N>::Tangent t{};
  if (m > 0.0) {
    for (std::size_t k = 0; k < N; ++k) t[k] = (re * z.re.tangent(k) + im * z.im.tangent(k)) / m;
  }
  return Dual<N>(m, t);
}

}  // namespace drumremap
