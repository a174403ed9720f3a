#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "drumremap/autodiff.hpp"
#include "drumremap/fft.hpp"

using namespace drumremap;

namespace {

// Central difference of a scalar function.
template <class F>
double central(F&& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Direct O(n^2) DFT, the reference the FFT is checked against.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x, std::size_t size) {
  std::vector<std::complex<double>> out(size / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc{};
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(size);
      acc += x[n] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("lift seeds a unit tangent or none") {
    const auto a = Dual<4>::lift(0.5, 2);
    CHECK(a.value() == 0.5);
    CHECK(a.tangent() == Dual<4>::Tangent{0, 0, 1, 0});

    const auto b = Dual<2>::lift(3.0);
    CHECK(b.value() == 3.0);
    CHECK(b.tangent() == Dual<2>::Tangent{0, 0});

    const auto c = Dual<1>::lift(1.0, 0);
    CHECK(c.tangent(0) == 1.0);

    CHECK_THROWS_AS(Dual<2>::lift(1.0, 2), std::out_of_range);
  }

  TEST_CASE("worked primitive examples") {
    const auto t = tanh(Dual<1>::lift(0.0, 0));
    CHECK(t.value() == 0.0);
    CHECK(t.tangent(0) == 1.0);

    const auto x = Dual<1>::lift(3.0, 0);
    const auto sq = x * x;
    CHECK(sq.value() == 9.0);
    CHECK(sq.tangent(0) == 6.0);

    const auto e = exp(Dual<1>::lift(1.0, 0));
    CHECK(e.value() == doctest::Approx(std::numbers::e));
    CHECK(e.tangent(0) == doctest::Approx(central([](double v) { return std::exp(v); }, 1.0)).epsilon(1e-8));
  }

  TEST_CASE("every primitive matches a central difference") {
    using D = Dual<1>;
    struct Case {
      const char* name;
      double x;
      D (*dual)(const D&);
      double (*plain)(double);
    };
    const Case cases[] = {
        {"exp", 0.3, [](const D& v) { return exp(v); }, [](double v) { return std::exp(v); }},
        {"log", 1.7, [](const D& v) { return log(v); }, [](double v) { return std::log(v); }},
        {"log10", 2.5, [](const D& v) { return log10(v); }, [](double v) { return std::log10(v); }},
        {"log1p", 0.4, [](const D& v) { return log1p(v); }, [](double v) { return std::log1p(v); }},
        {"sqrt", 0.8, [](const D& v) { return sqrt(v); }, [](double v) { return std::sqrt(v); }},
        {"pow", 1.3, [](const D& v) { return pow(v, 1.864); }, [](double v) { return std::pow(v, 1.864); }},
        {"sin", 0.9, [](const D& v) { return sin(v); }, [](double v) { return std::sin(v); }},
        {"cos", 0.9, [](const D& v) { return cos(v); }, [](double v) { return std::cos(v); }},
        {"tanh", -0.6, [](const D& v) { return tanh(v); }, [](double v) { return std::tanh(v); }},
        {"abs", -0.6, [](const D& v) { return abs(v); }, [](double v) { return std::abs(v); }},
        {"reciprocal", 0.7, [](const D& v) { return reciprocal(v); }, [](double v) { return 1.0 / v; }},
        {"neg", 0.7, [](const D& v) { return -v; }, [](double v) { return -v; }},
        {"div", 0.7, [](const D& v) { return (v * 2.0 + 1.0) / (v * v + 0.5); },
         [](double v) { return (2.0 * v + 1.0) / (v * v + 0.5); }},
        {"sub", 0.7, [](const D& v) { return 3.0 - v * v; }, [](double v) { return 3.0 - v * v; }},
        {"max", 0.7, [](const D& v) { return max(v, 0.5); }, [](double v) { return std::max(v, 0.5); }},
        {"min", 0.7, [](const D& v) { return min(v, 0.9); }, [](double v) { return std::min(v, 0.9); }},
    };
    for (const auto& c : cases) {
      CAPTURE(c.name);
      const auto d = c.dual(D::lift(c.x, 0));
      CHECK(d.value() == doctest::Approx(c.plain(c.x)).epsilon(1e-14));
      CHECK(d.tangent(0) == doctest::Approx(central(c.plain, c.x)).epsilon(1e-7));
    }
  }

  TEST_CASE("kinks and ties follow the declared rules") {
    CHECK(abs(Dual<1>::lift(0.0, 0)).tangent(0) == 0.0);
    CHECK(max(Dual<1>::lift(0.5, 0), 0.5).tangent(0) == 1.0);
    CHECK(min(Dual<1>::lift(0.5, 0), 0.5).tangent(0) == 1.0);
    CHECK(max(Dual<1>::lift(0.2, 0), 0.5).tangent(0) == 0.0);
    CHECK(clamp_unit(Dual<1>::lift(1.0, 0)).tangent(0) == 1.0);
    CHECK(clamp_unit(Dual<1>::lift(1.2, 0)).tangent(0) == 0.0);
  }

  TEST_CASE("domain errors raise instead of producing NaN") {
    using D = Dual<1>;
    CHECK_THROWS_AS(D(1.0) / D(0.0), DomainError);
    CHECK_THROWS_AS(log(D(0.0)), DomainError);
    CHECK_THROWS_AS(log(D(-1.0)), DomainError);
    CHECK_THROWS_AS(sqrt(D(0.0)), DomainError);
    CHECK_THROWS_AS(log1p(D(-1.0)), DomainError);
    CHECK_THROWS_AS(reciprocal(D(0.0)), DomainError);
    CHECK_THROWS_AS(drumremap::log(0.0), DomainError);
    CHECK_THROWS_AS(drumremap::sqrt(-2.0), DomainError);
  }

  TEST_CASE("expressions of constants carry no tangent") {
    const Dual<3> a(2.0), b(5.0);
    const auto r = exp(a * b - a) / (sqrt(b) + tanh(a));
    for (double t : r.tangent()) CHECK(t == 0.0);
  }

  TEST_CASE("rfft agrees with a direct DFT") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(48);
    for (double& v : x) v = u(rng);
    const auto fast = rfft(x, 64);
    const auto slow = naive_dft(x, 64);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t k = 0; k < fast.size(); ++k) {
      CHECK(fast[k].re == doctest::Approx(slow[k].real()).epsilon(1e-12).scale(1.0));
      CHECK(fast[k].im == doctest::Approx(slow[k].imag()).epsilon(1e-12).scale(1.0));
    }
    CHECK_THROWS(rfft(x, 48));
    CHECK_THROWS(rfft(x, 32));
  }

  TEST_CASE("dual_rfft: zero signal and impulse") {
    std::vector<Dual<2>> zero(16);
    for (const auto& z : dual_rfft<2>(zero, 16)) {
      CHECK(z.re.value() == 0.0);
      CHECK(z.im.tangent(1) == 0.0);
    }
    std::vector<Dual<2>> impulse(16);
    impulse[0] = Dual<2>::lift(1.0, 1);
    for (const auto& z : dual_rfft<2>(impulse, 16)) {
      CHECK(z.re.value() == doctest::Approx(1.0));
      CHECK(z.im.value() == doctest::Approx(0.0));
      CHECK(z.re.tangent(1) == doctest::Approx(1.0));
      CHECK(z.re.tangent(0) == 0.0);
    }
  }

  TEST_CASE("dual_rfft is linear in value and tangent") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Dual<2>> x(32), y(32), mix(32);
    for (std::size_t n = 0; n < 32; ++n) {
      x[n] = Dual<2>(u(rng), {u(rng), u(rng)});
      y[n] = Dual<2>(u(rng), {u(rng), u(rng)});
      mix[n] = x[n] * 0.7 + y[n] * -1.3;
    }
    const auto fx = dual_rfft<2>(x, 32);
    const auto fy = dual_rfft<2>(y, 32);
    const auto fm = dual_rfft<2>(mix, 32);
    for (std::size_t k = 0; k < fm.size(); ++k) {
      const auto re = fx[k].re * 0.7 + fy[k].re * -1.3;
      const auto im = fx[k].im * 0.7 + fy[k].im * -1.3;
      CHECK(fm[k].re.value() == doctest::Approx(re.value()).epsilon(1e-12));
      CHECK(fm[k].im.value() == doctest::Approx(im.value()).epsilon(1e-12));
      for (std::size_t t = 0; t < 2; ++t) {
        CHECK(fm[k].re.tangent(t) == doctest::Approx(re.tangent(t)).epsilon(1e-12));
        CHECK(fm[k].im.tangent(t) == doctest::Approx(im.tangent(t)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("tangent of |X[k]| matches finite differences of the whole pipeline") {
    // x[n] = s[n] * (1 + p * w[n]); differentiate every |X[k]| with respect to p.
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> s(64), w(64);
    for (std::size_t n = 0; n < 64; ++n) {
      s[n] = u(rng);
      w[n] = u(rng);
    }
    const double p0 = 0.3;
    const auto mags = [&](double p) {
      std::vector<double> x(64);
      for (std::size_t n = 0; n < 64; ++n) x[n] = s[n] * (1.0 + p * w[n]);
      std::vector<double> out;
      for (const auto& z : rfft(x, 64)) out.push_back(std::hypot(z.re, z.im));
      return out;
    };
    const auto p = Dual<1>::lift(p0, 0);
    std::vector<Dual<1>> x(64);
    for (std::size_t n = 0; n < 64; ++n) x[n] = (p * w[n] + 1.0) * s[n];
    const auto spec = dual_rfft<1>(x, 64);
    const double h = 1e-5;
    const auto up = mags(p0 + h), down = mags(p0 - h);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double fd = (up[k] - down[k]) / (2.0 * h);
      CHECK(magnitude(spec[k]).tangent(0) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}
