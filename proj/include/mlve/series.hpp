#pragma once

// Exact perturbative coefficients in g of log Z and of cumulants, plus the
// Borel transform and Borel-Pade resummation used to probe summability.
//
// Wick contractions against the covariance delta_pq / p are aggregated per
// mode: the number of ways to pair a fields phibar_p with a fields phi_p is
// a!, so E[|phi_p|^{2a}] = a! / p^a, and moments of the Wick-ordered
// interaction (sum_p |phi_p|^2 - L)^{2m} follow by exponential-generating
// function convolution over the modes, in exact rational arithmetic.

#include "mlve/errors.hpp"
#include "mlve/model.hpp"
#include "mlve/partitions.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <complex>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mlve {

using Rational = boost::multiprecision::cpp_rational;

inline constexpr int kMaxWickOrder = 10;

enum class ObservableKind { FreeEnergy, Cumulant };

struct Observable {
  ObservableKind kind = ObservableKind::FreeEnergy;
  std::vector<int> momenta;

  static Observable free_energy() { return {}; }
  static Observable cumulant(std::vector<int> momenta) { return {ObservableKind::Cumulant, std::move(momenta)}; }
  int k() const { return static_cast<int>(momenta.size()); }
  std::string tag() const {
    if (kind == ObservableKind::FreeEnergy) return "free_energy";
    std::ostringstream os;
    os << "cumulant(" << momenta.size() << ";";
    for (std::size_t i = 0; i < momenta.size(); ++i) os << (i ? "," : "") << momenta[i];
    os << ")";
    return os.str();
  }
};

template <class T>
struct SeriesCoefficients {
  Observable observable;
  std::vector<T> c;  // c[m] multiplies g^m
  int order() const { return static_cast<int>(c.size()) - 1; }
};

namespace rseries {

using Poly = std::vector<Rational>;

inline Poly mul(const Poly& a, const Poly& b, int order) {
  Poly r(order + 1, Rational(0));
  for (int i = 0; i <= order && i < static_cast<int>(a.size()); ++i) {
    if (a[i] == 0) continue;
    for (int j = 0; i + j <= order && j < static_cast<int>(b.size()); ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

inline Poly inverse(const Poly& a, int order) {
  if (a.empty() || a[0] == 0) throw std::domain_error("series inverse: zero constant term");
  Poly r(order + 1, Rational(0));
  r[0] = Rational(1) / a[0];
  for (int n = 1; n <= order; ++n) {
    Rational acc(0);
    for (int i = 1; i <= n && i < static_cast<int>(a.size()); ++i) acc += a[i] * r[n - i];
    r[n] = -acc / a[0];
  }
  return r;
}

/// log(a) for a[0] == 1, via (log a)' = a'/a.
inline Poly log(const Poly& a, int order) {
  if (a.empty() || a[0] != 1) throw std::domain_error("series log: constant term must be 1");
  Poly da(order + 1, Rational(0));
  for (int i = 1; i <= order && i < static_cast<int>(a.size()); ++i) da[i - 1] = a[i] * i;
  const Poly q = mul(da, inverse(a, order), order);
  Poly r(order + 1, Rational(0));
  for (int i = 1; i <= order; ++i) r[i] = q[i - 1] / i;
  return r;
}

}  // namespace rseries

namespace detail {

inline Rational factorial(int n) {
  boost::multiprecision::cpp_int f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return Rational(f);
}

/// Z_S(g) truncated at g^order: E[exp(-(g/2)(X - L)^2) prod_p x_p^{m_p} / m_p!]
/// with x_p = |phi_p|^2 exponential of mean 1/p.
inline rseries::Poly wick_partition_series(const SliceConfig& sc, const std::map<int, int>& extra, int order) {
  const int R = 2 * order;
  Rational L(0);
  for (int p : sc.modes()) L += Rational(1, p);
  // EGF coefficients: egf[r] = E[(X - L)^r * extras] / r!
  rseries::Poly egf(R + 1, Rational(0));
  {
    Rational pw(1);
    for (int r = 0; r <= R; ++r) {
      egf[r] = pw / factorial(r);
      pw *= -L;
    }
  }
  for (int p : sc.modes()) {
    const int m = extra.count(p) ? extra.at(p) : 0;
    rseries::Poly e(R + 1);
    Rational pinv_pow(1);
    for (int i = 0; i < m; ++i) pinv_pow /= p;
    for (int a = 0; a <= R; ++a) {
      // E[x^{a+m}] / (m! a!) = (a+m)! / (p^{a+m} m! a!)
      e[a] = factorial(a + m) * pinv_pow / (factorial(m) * factorial(a));
      pinv_pow /= p;
    }
    egf = rseries::mul(egf, e, R);
  }
  rseries::Poly z(order + 1, Rational(0));
  Rational coef(1);  // (-1/2)^m / m!
  for (int m = 0; m <= order; ++m) {
    z[m] = coef * egf[2 * m] * factorial(2 * m);
    coef *= Rational(-1, 2);
    coef /= (m + 1);
  }
  return z;
}

}  // namespace detail

inline SeriesCoefficients<Rational> wick_coefficients(const SliceConfig& sc, const Observable& obs, int order) {
  if (order < 0) throw std::invalid_argument("wick_coefficients: negative order");
  if (order > kMaxWickOrder) throw OrderTooHigh("wick_coefficients: order above the exact-arithmetic cap");
  SeriesCoefficients<Rational> out{obs, {}};
  const rseries::Poly z0 = detail::wick_partition_series(sc, {}, order);
  if (obs.kind == ObservableKind::FreeEnergy) {
    out.c = rseries::log(z0, order);
    return out;
  }
  const int k = obs.k();
  if (k < 1 || k > kMaxCumulantOrder) throw std::invalid_argument("wick_coefficients: need 1 <= k <= k_max");
  for (int p : obs.momenta)
    if (!sc.contains(p)) throw std::invalid_argument("wick_coefficients: momentum outside the slices");
  const rseries::Poly z0inv = rseries::inverse(z0, order);
  const std::uint32_t full = (1u << k) - 1;
  std::vector<rseries::Poly> m(full + 1);
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    std::map<int, int> extra;
    for (int q = 0; q < k; ++q)
      if (mask & (1u << q)) ++extra[obs.momenta[q]];
    m[mask] = rseries::mul(detail::wick_partition_series(sc, extra, order), z0inv, order);
  }
  rseries::Poly kappa(order + 1, Rational(0));
  for (const auto& pi : set_partitions(k)) {
    rseries::Poly prod(order + 1, Rational(0));
    prod[0] = Rational(moebius_coefficient(pi.size()));
    for (auto b : pi) prod = rseries::mul(prod, m[b], order);
    for (int i = 0; i <= order; ++i) kappa[i] += prod[i];
  }
  out.c = std::move(kappa);
  return out;
}

/// b_m = c_m / m!.
template <class T>
SeriesCoefficients<T> borel_transform(const SeriesCoefficients<T>& s) {
  SeriesCoefficients<T> b = s;
  T fact = T(1);
  for (std::size_t m = 0; m < b.c.size(); ++m) {
    if (m > 0) fact = fact * T(static_cast<long long>(m));
    b.c[m] = s.c[m] / fact;
  }
  return b;
}

template <class T>
std::vector<double> to_double(const std::vector<T>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(static_cast<double>(x));
  return out;
}

/// [L/M] rational approximant P(t)/Q(t) with Q(0) = 1.
class PadeApproximant {
 public:
  PadeApproximant(std::vector<double> num, std::vector<double> den) : p_(std::move(num)), q_(std::move(den)) {}

  int numerator_degree() const { return static_cast<int>(p_.size()) - 1; }
  int denominator_degree() const { return static_cast<int>(q_.size()) - 1; }
  const std::vector<double>& numerator() const { return p_; }
  const std::vector<double>& denominator() const { return q_; }

  cplx operator()(cplx t) const { return horner(p_, t) / horner(q_, t); }

  /// Roots of the denominator (companion-matrix eigenvalues).
  std::vector<cplx> poles() const {
    int deg = denominator_degree();
    while (deg > 0 && q_[deg] == 0.0) --deg;
    if (deg == 0) return {};
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) C(i, deg - 1) = -q_[i] / q_[deg];
    Eigen::EigenSolver<Eigen::MatrixXd> es(C);
    std::vector<cplx> out;
    for (int i = 0; i < deg; ++i) out.push_back(es.eigenvalues()(i));
    return out;
  }

  /// Laplace integral int_0^inf e^{-t} B(g t) dt of the approximant B.
  /// Throws PoleHit if a pole of B lies on the integration ray.
  cplx borel_sum(cplx g) const {
    if (g == cplx{}) return p_.empty() ? cplx{} : cplx{p_[0]};
    for (cplx pole : poles()) {
      const cplx t = pole / g;
      if (t.real() > 0.0 && std::abs(t.imag()) < 1e-9 * std::abs(t))
        throw PoleHit("Borel-Pade: pole on the Laplace integration ray");
    }
    boost::math::quadrature::exp_sinh<double> integrator;
    auto part = [&](double t, bool imag) {
      const double e = std::exp(-t);
      if (e == 0.0) return 0.0;  // the tail underflows before the approximant can overflow
      const cplx b = (*this)(g * t);
      return e * (imag ? b.imag() : b.real());
    };
    auto re = [&](double t) { return part(t, false); };
    auto im = [&](double t) { return part(t, true); };
    return {integrator.integrate(re, 1e-12), integrator.integrate(im, 1e-12)};
  }

 private:
  static cplx horner(const std::vector<double>& c, cplx t) {
    cplx r{};
    for (auto it = c.rbegin(); it != c.rend(); ++it) r = r * t + *it;
    return r;
  }
  std::vector<double> p_, q_;
};

namespace detail {

/// Solves for the [L/M] approximant exactly; throws DegeneratePade when the
/// denominator system is singular.
inline PadeApproximant pade_exact(const std::vector<Rational>& b, int L, int M) {
  auto coef = [&](int i) { return (i >= 0 && i < static_cast<int>(b.size())) ? b[i] : Rational(0); };
  std::vector<Rational> q(M + 1, Rational(0));
  q[0] = 1;
  if (M > 0) {
    // sum_{i=1}^M q_i b_{L+k-i} = -b_{L+k}, k = 1..M
    std::vector<std::vector<Rational>> A(M, std::vector<Rational>(M + 1));
    for (int k = 1; k <= M; ++k) {
      for (int i = 1; i <= M; ++i) A[k - 1][i - 1] = coef(L + k - i);
      A[k - 1][M] = -coef(L + k);
    }
    for (int col = 0; col < M; ++col) {
      int piv = -1;
      for (int r = col; r < M; ++r)
        if (A[r][col] != 0) {
          piv = r;
          break;
        }
      if (piv < 0) throw DegeneratePade("Pade: singular denominator system");
      std::swap(A[piv], A[col]);
      for (int r = 0; r < M; ++r) {
        if (r == col || A[r][col] == 0) continue;
        const Rational f = A[r][col] / A[col][col];
        for (int c = col; c <= M; ++c) A[r][c] -= f * A[col][c];
      }
    }
    for (int i = 0; i < M; ++i) q[i + 1] = A[i][M] / A[i][i];
  }
  std::vector<Rational> p(L + 1, Rational(0));
  for (int i = 0; i <= L; ++i)
    for (int j = 0; j <= std::min(i, M); ++j) p[i] += q[j] * coef(i - j);
  return PadeApproximant(to_double(p), to_double(q));
}

}  // namespace detail

/// [L/M] Pade approximant of a Borel transform. With `fallback`, a singular
/// system retries with M-1, M-2, ... before giving up.
inline PadeApproximant pade_resum(const SeriesCoefficients<Rational>& borel, int L, int M, bool fallback = true) {
  if (L < 0 || M < 0) throw std::invalid_argument("pade_resum: negative degree");
  if (L + M > borel.order()) throw std::invalid_argument("pade_resum: L + M exceeds the series order");
  for (int m = M; m >= 0; --m) {
    try {
      return detail::pade_exact(borel.c, L, m);
    } catch (const DegeneratePade&) {
      if (!fallback || m == 0) throw;
    }
  }
  throw DegeneratePade("pade_resum: no non-degenerate approximant");
}

/// Truncated series value sum_m c_m g^m.
template <class T>
cplx evaluate_series(const SeriesCoefficients<T>& s, cplx g, int up_to = -1) {
  const int top = up_to < 0 ? s.order() : std::min(up_to, s.order());
  cplx r{};
  for (int m = top; m >= 0; --m) r = r * g + static_cast<double>(s.c[m]);
  return r;
}

}  // namespace mlve
