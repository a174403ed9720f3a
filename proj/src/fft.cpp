#include "drumremap/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>

namespace drumremap {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Plans are created once per (size, count) and kept for the lifetime of the
// process. FFTW's planner is not thread-safe; new-array execution is.
fftw_plan acquire_plan(std::size_t size, std::size_t count, RealFft::Layout layout) {
  static std::map<std::tuple<std::size_t, std::size_t, RealFft::Layout>, fftw_plan> cache;
  const std::lock_guard lock(planner_mutex());
  auto it = cache.find({size, count, layout});
  if (it != cache.end()) return it->second;

  const std::size_t bins = size / 2 + 1;
  double* in = fftw_alloc_real(size * count);
  fftw_complex* out = fftw_alloc_complex(bins * count);
  const int n = static_cast<int>(size);
  // FFTW_ESTIMATE keeps the chosen algorithm, and so the rounding, identical
  // from run to run.
  const int howmany = static_cast<int>(count);
  const bool interleaved = layout == RealFft::Layout::Interleaved;
  const int stride = interleaved ? howmany : 1;
  const int idist = interleaved ? 1 : n;
  const int odist = interleaved ? 1 : static_cast<int>(bins);
  fftw_plan plan = fftw_plan_many_dft_r2c(1, &n, howmany, in, nullptr, stride, idist, out, nullptr, stride, odist,
                                          FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
  fftw_free(in);
  fftw_free(out);
  if (plan == nullptr) throw std::runtime_error("FFTW failed to create a plan");
  cache.emplace(std::make_tuple(size, count, layout), plan);
  return plan;
}

}  // namespace

RealFft::RealFft(std::size_t size, std::size_t count, Layout layout)
    : size_(size), count_(count), layout_(layout) {
  if (!is_power_of_two(size)) throw std::invalid_argument("FFT size must be a power of two");
  if (count == 0) throw std::invalid_argument("FFT batch count must be positive");
  plan_ = acquire_plan(size, count, layout);
  {
    const std::lock_guard lock(planner_mutex());
    input_ = fftw_alloc_real(size * count);
    output_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(bins() * count));
  }
  if (input_ == nullptr || output_ == nullptr) throw std::bad_alloc();
  std::fill_n(input_, size * count, 0.0);
}

RealFft::~RealFft() {
  fftw_free(input_);
  fftw_free(output_);
}

RealFft::RealFft(RealFft&& other) noexcept
    : size_(std::exchange(other.size_, 0)),
      count_(std::exchange(other.count_, 0)),
      layout_(other.layout_),
      plan_(std::exchange(other.plan_, nullptr)),
      input_(std::exchange(other.input_, nullptr)),
      output_(std::exchange(other.output_, nullptr)) {}

RealFft& RealFft::operator=(RealFft&& other) noexcept {
  if (this != &other) {
    fftw_free(input_);
    fftw_free(output_);
    size_ = std::exchange(other.size_, 0);
    count_ = std::exchange(other.count_, 0);
    layout_ = other.layout_;
    plan_ = std::exchange(other.plan_, nullptr);
    input_ = std::exchange(other.input_, nullptr);
    output_ = std::exchange(other.output_, nullptr);
  }
  return *this;
}

void RealFft::execute() {
  // std::complex<double> is layout-compatible with fftw_complex.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), input_, reinterpret_cast<fftw_complex*>(output_));
}

RealFft& RealFft::scratch(std::size_t size, std::size_t count, Layout layout) {
  thread_local std::map<std::tuple<std::size_t, std::size_t, Layout>, std::unique_ptr<RealFft>> pool;
  auto& slot = pool[{size, count, layout}];
  if (!slot) slot = std::make_unique<RealFft>(size, count, layout);
  return *slot;
}

std::vector<Complex<double>> rfft(std::span<const double> signal, std::size_t size) {
  if (!is_power_of_two(size)) throw std::invalid_argument("FFT size must be a power of two");
  if (signal.size() > size) throw std::invalid_argument("FFT size smaller than signal");
  RealFft& fft = RealFft::scratch(size);
  auto in = fft.input();
  std::fill(in.begin(), in.end(), 0.0);
  std::copy(signal.begin(), signal.end(), in.begin());
  fft.execute();
  const auto spec = fft.output();
  std::vector<Complex<double>> out(spec.size());
  for (std::size_t b = 0; b < spec.size(); ++b) out[b] = {spec[b].real(), spec[b].imag()};
  return out;
}

}  // namespace drumremap
