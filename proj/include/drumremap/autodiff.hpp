#pragma once

// Forward-mode automatic differentiation over a fixed-width tangent vector.
//
// Dual<N> carries a value and the partial derivatives of that value with
// respect to N seeded inputs. All synthesis and feature code is written
// generically so it can run over plain doubles or over Dual<N>.
//
//   auto x = Dual<1>::lift(3.0, 0);
//   auto y = x * x;   // y.value() == 9, y.tangent(0) == 6

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace drumremap {

/// Raised for arguments outside a primitive's domain (log of 0, x / 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <std::size_t N>
class Dual {
 public:
  using Tangent = std::array<double, N>;
  static constexpr std::size_t width = N;

  constexpr Dual() = default;
  // Implicit so that constants mix freely with duals; constants carry no tangent.
  constexpr Dual(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double value, const Tangent& tangent) : value_(value), tangent_(tangent) {}

  /// Constant lift when `seed` is empty, otherwise a unit tangent at `seed`.
  static Dual lift(double x, std::optional<std::size_t> seed = std::nullopt) {
    Dual d(x);
    if (seed) {
      if (*seed >= N) {
        throw std::out_of_range("seed index " + std::to_string(*seed) + " out of range for width " +
                                std::to_string(N));
      }
      d.tangent_[*seed] = 1.0;
    }
    return d;
  }

  constexpr double value() const { return value_; }
  constexpr const Tangent& tangent() const { return tangent_; }
  constexpr double tangent(std::size_t k) const { return tangent_[k]; }

  Dual& operator+=(const Dual& o) {
    value_ += o.value_;
    for (std::size_t k = 0; k < N; ++k) tangent_[k] += o.tangent_[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    value_ -= o.value_;
    for (std::size_t k = 0; k < N; ++k) tangent_[k] -= o.tangent_[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t k = 0; k < N; ++k) tangent_[k] = tangent_[k] * o.value_ + value_ * o.tangent_[k];
    value_ *= o.value_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    *this = *this / o;
    return *this;
  }
  Dual& operator+=(double c) {
    value_ += c;
    return *this;
  }
  Dual& operator-=(double c) {
    value_ -= c;
    return *this;
  }
  Dual& operator*=(double c) {
    value_ *= c;
    for (auto& t : tangent_) t *= c;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator+(Dual a, double c) { return a += c; }
  friend Dual operator+(double c, Dual a) { return a += c; }
  friend Dual operator-(Dual a, double c) { return a -= c; }
  friend Dual operator-(double c, const Dual& a) { return -a + c; }
  friend Dual operator*(Dual a, double c) { return a *= c; }
  friend Dual operator*(double c, Dual a) { return a *= c; }

  friend Dual operator-(const Dual& a) {
    Dual r;
    r.value_ = -a.value_;
    for (std::size_t k = 0; k < N; ++k) r.tangent_[k] = -a.tangent_[k];
    return r;
  }

  friend Dual operator/(const Dual& a, const Dual& b) {
    if (b.value_ == 0.0) throw DomainError("division by zero");
    Dual r;
    r.value_ = a.value_ / b.value_;
    const double inv = 1.0 / b.value_;
    for (std::size_t k = 0; k < N; ++k) r.tangent_[k] = (a.tangent_[k] - r.value_ * b.tangent_[k]) * inv;
    return r;
  }
  friend Dual operator/(const Dual& a, double c) {
    if (c == 0.0) throw DomainError("division by zero");
    Dual r;
    r.value_ = a.value_ / c;
    for (std::size_t k = 0; k < N; ++k) r.tangent_[k] = a.tangent_[k] / c;
    return r;
  }
  friend Dual operator/(double c, const Dual& b) { return Dual(c) / b; }

  // Comparisons look at values only.
  friend bool operator<(const Dual& a, const Dual& b) { return a.value_ < b.value_; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.value_ > b.value_; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.value_ <= b.value_; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.value_ >= b.value_; }

  /// f(value) with tangent f'(value) * tangent.
  Dual chain(double fx, double dfx) const {
    Dual r;
    r.value_ = fx;
    for (std::size_t k = 0; k < N; ++k) r.tangent_[k] = dfx * tangent_[k];
    return r;
  }

 private:
  double value_ = 0.0;
  Tangent tangent_{};
};

template <std::size_t N>
Dual<N> lift(double x, std::optional<std::size_t> seed = std::nullopt) {
  return Dual<N>::lift(x, seed);
}

template <std::size_t N>
Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.value());
  return x.chain(e, e);
}

template <std::size_t N>
Dual<N> log(const Dual<N>& x) {
  if (!(x.value() > 0.0)) throw DomainError("log of non-positive value");
  return x.chain(std::log(x.value()), 1.0 / x.value());
}

template <std::size_t N>
Dual<N> log10(const Dual<N>& x) {
  if (!(x.value() > 0.0)) throw DomainError("log10 of non-positive value");
  return x.chain(std::log10(x.value()), 1.0 / (x.value() * std::log(10.0)));
}

template <std::size_t N>
Dual<N> log1p(const Dual<N>& x) {
  if (!(x.value() > -1.0)) throw DomainError("log1p of value <= -1");
  return x.chain(std::log1p(x.value()), 1.0 / (1.0 + x.value()));
}

template <std::size_t N>
Dual<N> sqrt(const Dual<N>& x) {
  if (!(x.value() > 0.0)) throw DomainError("sqrt of non-positive value");
  const double s = std::sqrt(x.value());
  return x.chain(s, 0.5 / s);
}

/// x^c for a constant exponent. Negative bases are rejected; 0^c needs c >= 1.
template <std::size_t N>
Dual<N> pow(const Dual<N>& x, double c) {
  if (x.value() < 0.0) throw DomainError("pow of negative base");
  if (x.value() == 0.0) {
    if (c < 1.0) throw DomainError("pow of zero with exponent < 1");
    return x.chain(0.0, c == 1.0 ? 1.0 : 0.0);
  }
  const double p = std::pow(x.value(), c);
  return x.chain(p, c * p / x.value());
}

template <std::size_t N>
Dual<N> sin(const Dual<N>& x) {
  return x.chain(std::sin(x.value()), std::cos(x.value()));
}

template <std::size_t N>
Dual<N> cos(const Dual<N>& x) {
  return x.chain(std::cos(x.value()), -std::sin(x.value()));
}

template <std::size_t N>
Dual<N> tanh(const Dual<N>& x) {
  const double t = std::tanh(x.value());
  return x.chain(t, 1.0 - t * t);
}

// Subgradient 0 at the kink.
template <std::size_t N>
Dual<N> abs(const Dual<N>& x) {
  const double v = x.value();
  return x.chain(std::abs(v), v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}

// Ties select the variable branch so the tangent survives at the bound.
template <std::size_t N>
Dual<N> max(const Dual<N>& x, double c) {
  return x.value() >= c ? x : Dual<N>(c);
}

template <std::size_t N>
Dual<N> min(const Dual<N>& x, double c) {
  return x.value() <= c ? x : Dual<N>(c);
}

template <std::size_t N>
Dual<N> reciprocal(const Dual<N>& x) {
  if (x.value() == 0.0) throw DomainError("reciprocal of zero");
  const double r = 1.0 / x.value();
  return x.chain(r, -r * r);
}

// Helpers that let generic code treat double and Dual<N> uniformly.

inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Dual<N>& x) {
  return x.value();
}

template <class T>
struct field_traits {
  static constexpr std::size_t width = 0;
};
template <std::size_t N>
struct field_traits<Dual<N>> {
  static constexpr std::size_t width = N;
};

// Plain-double counterparts with the same domain checks, so unqualified calls in
// generic code resolve for both fields.
inline double exp(double x) { return std::exp(x); }
inline double log(double x) {
  if (!(x > 0.0)) throw DomainError("log of non-positive value");
  return std::log(x);
}
inline double log10(double x) {
  if (!(x > 0.0)) throw DomainError("log10 of non-positive value");
  return std::log10(x);
}
inline double log1p(double x) {
  if (!(x > -1.0)) throw DomainError("log1p of value <= -1");
  return std::log1p(x);
}
inline double sqrt(double x) {
  if (!(x > 0.0)) throw DomainError("sqrt of non-positive value");
  return std::sqrt(x);
}
inline double pow(double x, double c) {
  if (x < 0.0) throw DomainError("pow of negative base");
  if (x == 0.0 && c < 1.0) throw DomainError("pow of zero with exponent < 1");
  return std::pow(x, c);
}
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double abs(double x) { return std::abs(x); }
inline double max(double x, double c) { return x >= c ? x : c; }
inline double min(double x, double c) { return x <= c ? x : c; }
inline double reciprocal(double x) {
  if (x == 0.0) throw DomainError("reciprocal of zero");
  return 1.0 / x;
}

/// Clamp to [0, 1]; the tangent passes through when the value sits on a bound.
template <class T>
T clamp_unit(const T& x) {
  return max(min(x, 1.0), 0.0);
}

}  // namespace drumremap
