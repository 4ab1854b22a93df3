#pragma once

// Forward-mode differentiation helpers.
//
// Jet<T> is a univariate Taylor polynomial truncated at a runtime degree
// (coefficients, not derivatives: c_k = f^(k)(x0) / k!). It doubles as the
// "power series in lambda" scalar used when the expansion is re-expanded in
// the coupling.
//
// MultiDual<T> is the nilpotent algebra generated by eps_1..eps_E with
// eps_i^2 = 0; the coefficient of eps_S is the mixed partial derivative over
// the edge set S, which is exactly what the forest formula needs.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mlve {

template <class T>
class Jet {
 public:
  static constexpr int kCapacity = 16;

  Jet() : deg_(0) { c_.fill(T{}); }
  Jet(T value, int degree) : deg_(degree) {
    if (degree < 0 || degree >= kCapacity) throw std::out_of_range("Jet degree out of range");
    c_.fill(T{});
    c_[0] = value;
  }

  static Jet variable(T x0, int degree) {
    Jet j(x0, degree);
    if (degree >= 1) j.c_[1] = T(1);
    return j;
  }

  int degree() const { return deg_; }
  const T& operator[](int k) const { return c_[k]; }
  T& operator[](int k) { return c_[k]; }
  T value() const { return c_[0]; }

  /// k-th derivative at the expansion point.
  T derivative(int k) const {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return c_[k] * f;
  }

  // Mixed degrees promote to the larger one; missing coefficients are zero.
  Jet& operator+=(const Jet& o) {
    deg_ = std::max(deg_, o.deg_);
    for (int k = 0; k <= deg_; ++k) c_[k] += o.c_[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    deg_ = std::max(deg_, o.deg_);
    for (int k = 0; k <= deg_; ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Jet& operator*=(const T& s) {
    for (int k = 0; k <= deg_; ++k) c_[k] *= s;
    return *this;
  }
  Jet& operator*=(const Jet& o) {
    deg_ = std::max(deg_, o.deg_);
    std::array<T, kCapacity> r;
    for (int k = 0; k <= deg_; ++k) {
      T acc{};
      for (int i = 0; i <= k; ++i) acc += c_[i] * o.c_[k - i];
      r[k] = acc;
    }
    for (int k = 0; k <= deg_; ++k) c_[k] = r[k];
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, const Jet& b) { return a *= b; }
  friend Jet operator*(Jet a, const T& s) { return a *= s; }
  friend Jet operator*(const T& s, Jet a) { return a *= s; }
  friend Jet operator-(Jet a) { return a *= T(-1); }

  bool is_zero() const {
    for (int k = 0; k <= deg_; ++k)
      if (c_[k] != T{}) return false;
    return true;
  }

 private:
  int deg_;
  std::array<T, kCapacity> c_;
};

/// 1/x as a jet; requires x[0] != 0.
template <class T>
Jet<T> reciprocal(const Jet<T>& x) {
  Jet<T> r(T{}, x.degree());
  r[0] = T(1) / x[0];
  for (int k = 1; k <= x.degree(); ++k) {
    T acc{};
    for (int i = 1; i <= k; ++i) acc += x[i] * r[k - i];
    r[k] = -acc / x[0];
  }
  return r;
}

/// exp(x) - 1 with the constant term computed without cancellation.
template <class T>
Jet<T> expm1_jet(const Jet<T>& x, T expm1_of_constant) {
  Jet<T> e(T{}, x.degree());
  e[0] = expm1_of_constant + T(1);
  for (int k = 1; k <= x.degree(); ++k) {
    T acc{};
    for (int i = 1; i <= k; ++i) acc += T(static_cast<double>(i)) * x[i] * e[k - i];
    e[k] = acc / T(static_cast<double>(k));
  }
  e[0] = expm1_of_constant;
  return e;
}

inline std::complex<double> expm1(std::complex<double> z) {
  const double x = z.real(), y = z.imag();
  const double s = std::sin(0.5 * y);
  return {std::expm1(x) * std::cos(y) - 2.0 * s * s, std::exp(x) * std::sin(y)};
}

template <class T>
Jet<T> exp(const Jet<T>& x) {
  using std::exp;
  Jet<T> r = expm1_jet(x, exp(x[0]) - T(1));
  r[0] += T(1);
  return r;
}

template <class T>
class MultiDual {
 public:
  explicit MultiDual(int generators, T value = T{})
      : generators_(generators), c_(std::size_t{1} << generators, T{}) {
    c_[0] = value;
  }

  static MultiDual variable(int generators, T value, int which) {
    MultiDual d(generators, value);
    d.c_[std::size_t{1} << which] = T(1);
    return d;
  }

  int generators() const { return generators_; }
  T value() const { return c_[0]; }
  const T& coefficient(std::uint32_t mask) const { return c_[mask]; }
  T& coefficient(std::uint32_t mask) { return c_[mask]; }

  MultiDual& operator+=(const MultiDual& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  MultiDual& operator*=(const T& s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  friend MultiDual operator+(MultiDual a, const MultiDual& b) { return a += b; }
  friend MultiDual operator+(MultiDual a, const T& s) {
    a.c_[0] += s;
    return a;
  }
  friend MultiDual operator*(MultiDual a, const T& s) { return a *= s; }
  friend MultiDual operator*(const T& s, MultiDual a) { return a *= s; }
  friend MultiDual operator*(const MultiDual& a, const MultiDual& b) {
    MultiDual r(a.generators_);
    const std::uint32_t n = static_cast<std::uint32_t>(a.c_.size());
    for (std::uint32_t i = 0; i < n; ++i) {
      if (a.c_[i] == T{}) continue;
      const std::uint32_t rest = (n - 1) & ~i;
      // iterate over all subsets j of the complement of i
      for (std::uint32_t j = rest;; j = (j - 1) & rest) {
        r.c_[i | j] += a.c_[i] * b.c_[j];
        if (j == 0) break;
      }
    }
    return r;
  }

 private:
  int generators_;
  std::vector<T> c_;
};

template <class T>
MultiDual<T> exp(const MultiDual<T>& x) {
  using std::exp;
  MultiDual<T> nil = x;
  nil.coefficient(0) = T{};
  MultiDual<T> term(x.generators(), T(1));
  MultiDual<T> sum(x.generators(), T(1));
  for (int k = 1; k <= x.generators(); ++k) {
    term = term * nil;
    term *= T(1.0 / k);
    sum += term;
  }
  sum *= exp(x.value());
  return sum;
}

}  // namespace mlve
