#pragma once

// Vertex factors of the tree expansion and their Gaussian expectations over
// replica fields sigma_1..sigma_n with covariance X(w).
//
// Interaction vertex in slice j:   f(sigma) = exp(-V_j(sigma)) - 1
// Source vertex with momenta {p}:  f(sigma) = prod_p G_p(sigma)

#include "mlve/errors.hpp"
#include "mlve/forests.hpp"
#include "mlve/model.hpp"
#include "mlve/quadrature.hpp"
#include "mlve/taylor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace mlve {

enum class VertexKind { Interaction, Source };

struct WFactor {
  int vertex = 0;
  VertexKind kind = VertexKind::Interaction;
  int slice = 1;             // j, used by the interaction kind
  std::vector<int> momenta;  // attached external momenta, used by the source kind
};

namespace detail {

inline std::span<const int> slice_modes(const SliceConfig& sc, int j) {
  const int s = j - sc.j_min();
  if (s < 0 || s >= sc.slice_count()) throw std::out_of_range("slice index outside [j_min, j_max]");
  return sc.slice(s);
}

inline void check_factor(const WFactor& wf) {
  if (wf.kind == VertexKind::Source && wf.momenta.empty())
    throw std::invalid_argument("source vertex without attached momenta");
}

}  // namespace detail

/// Taylor jet of f at sigma0 in sigma, degree m.
inline Jet<cplx> w_factor_jet(const WFactor& wf, cplx sigma0, const CouplingPoint& cp, const SliceConfig& sc, int m) {
  detail::check_factor(wf);
  if (wf.kind == VertexKind::Interaction) {
    Jet<cplx> v(cplx{}, m);
    for (int p : detail::slice_modes(sc, wf.slice)) {
      const cplx scale = kI * cp.lambda / static_cast<double>(p);
      Jet<cplx> t;
      try {
        t = log2_jet(scale * sigma0, m);
      } catch (const BranchCut&) {
        throw BranchCut("interaction factor: branch cut hit at p = " + std::to_string(p));
      }
      cplx s = 1.0;
      for (int k = 1; k <= m; ++k) {
        s *= scale;
        t[k] *= s;
      }
      v += t;
    }
    v *= cplx{-1.0};
    return expm1_jet(v, mlve::expm1(v[0]));
  }
  Jet<cplx> r(cplx{1.0}, m);
  for (int p : wf.momenta) {
    // G_p(sigma0 + h) = (1/p) sum_k a^k h^k / (1 - a sigma0)^(k+1), a = i lambda / p
    const cplx a = kI * cp.lambda / static_cast<double>(p);
    const cplx inv = inverse_resolvent(cp.lambda * sigma0 / static_cast<double>(p));
    Jet<cplx> g(cplx{}, m);
    cplx c = inv / static_cast<double>(p);
    for (int k = 0; k <= m; ++k) {
      g[k] = c;
      c *= a * inv;
    }
    r *= g;
  }
  return r;
}

inline cplx w_factor_eval(const WFactor& wf, cplx sigma, const CouplingPoint& cp, const SliceConfig& sc) {
  detail::check_factor(wf);
  if (wf.kind == VertexKind::Interaction) return mlve::expm1(-interaction_V(sigma, cp, detail::slice_modes(sc, wf.slice)));
  cplx r = 1.0;
  for (int p : wf.momenta) r *= dressed_propagator(p, sigma, cp.lambda);
  return r;
}

/// m-th sigma-derivative of the vertex factor, by forward-mode Taylor arithmetic.
inline cplx w_factor_derivative(const WFactor& wf, cplx sigma, const CouplingPoint& cp, const SliceConfig& sc, int m) {
  if (m < 0 || m >= Jet<cplx>::kCapacity) throw std::out_of_range("w_factor_derivative: order out of range");
  if (m == 0) return w_factor_eval(wf, sigma, cp, sc);
  return w_factor_jet(wf, sigma, cp, sc, m).derivative(m);
}

/// Taylor coefficients at u = 0 of h with f(sigma) = h(lambda sigma), up to u^degree.
inline std::vector<cplx> w_factor_taylor(const WFactor& wf, const SliceConfig& sc, int degree) {
  detail::check_factor(wf);
  Jet<cplx> h(cplx{}, degree);
  if (wf.kind == VertexKind::Interaction) {
    Jet<cplx> v(cplx{}, degree);
    for (int p : detail::slice_modes(sc, wf.slice)) {
      const cplx a = kI / static_cast<double>(p);
      cplx s = a;
      for (int k = 2; k <= degree; ++k) {
        s *= a;
        v[k] -= s / static_cast<double>(k);
      }
    }
    h = expm1_jet(v * cplx{-1.0}, cplx{});
  } else {
    h = Jet<cplx>(cplx{1.0}, degree);
    for (int p : wf.momenta) {
      Jet<cplx> g(cplx{}, degree);
      cplx c = 1.0 / static_cast<double>(p);
      for (int k = 0; k <= degree; ++k) {
        g[k] = c;
        c *= kI / static_cast<double>(p);
      }
      h *= g;
    }
  }
  std::vector<cplx> out(degree + 1);
  for (int k = 0; k <= degree; ++k) out[k] = h[k];
  return out;
}

/// m-th sigma-derivative of one vertex factor at a fixed coupling, in closed
/// form. With E = e^{-V} and l_k = d^k log E, l_1 = sum_p a_p u_p / (1 - u_p)
/// and l_k = sum_p (k-1)! a_p^k / (1 - u_p)^k for k >= 2 (u_p = a_p sigma,
/// a_p = i lambda / p); E^(m) = E * Bell_m(l_1..l_m). Sources use
/// G_p^(m) = m! a^m / (p (1 - u)^(m+1)).
class VertexFunction {
 public:
  VertexFunction(const WFactor& wf, const CouplingPoint& cp, const SliceConfig& sc, int m)
      : wf_(wf), cp_(&cp), sc_(&sc), m_(m) {
    detail::check_factor(wf);
    if (m < 0 || m >= Jet<cplx>::kCapacity) throw std::out_of_range("VertexFunction: order out of range");
    if (wf.kind == VertexKind::Interaction)
      for (int p : detail::slice_modes(sc, wf.slice)) a_.push_back(kI * cp.lambda / static_cast<double>(p));
    else if (wf.momenta.size() == 1)
      a_.push_back(kI * cp.lambda / static_cast<double>(wf.momenta[0]));
    fact_ = 1.0;
    for (int t = 2; t <= m; ++t) fact_ *= t;
  }

  cplx operator()(double sigma) const {
    if (wf_.kind == VertexKind::Source) {
      if (a_.empty()) return w_factor_derivative(wf_, sigma, *cp_, *sc_, m_);
      const cplx w = 1.0 - a_[0] * sigma;
      if (std::abs(w) < 1e-14) throw PoleHit("VertexFunction: resolvent vanishes");
      cplx r = fact_ / (static_cast<double>(wf_.momenta[0]) * w);
      for (int t = 0; t < m_; ++t) r *= a_[0] / w;
      return r;
    }
    cplx V{};
    for (const cplx& a : a_) {
      // u + log(1 - u) with real log1p/atan2; no branch cut is met for |gamma| < pi/2
      const cplx u = a * sigma;
      if (std::norm(u) < 0.01) {
        V += log2_interaction(u);
        continue;
      }
      const double x = 1.0 - u.real(), y = -u.imag();
      if (x <= 0.0 && y == 0.0) throw BranchCut("VertexFunction: 1 - u is a nonpositive real");
      V += u + cplx{0.5 * std::log1p(std::norm(u) - 2.0 * u.real()), std::atan2(y, x)};
    }
    if (m_ == 0) return mlve::expm1(-V);
    std::array<cplx, Jet<cplx>::kCapacity> l{}, bell{};
    for (const cplx& a : a_) {
      const cplx u = a * sigma;
      const cplx r = a / (1.0 - u);
      l[1] += r * u;
      cplx pw = r;
      double fk = 1.0;
      for (int k = 2; k <= m_; ++k) {
        pw *= r;
        l[k] += fk * pw;
        fk *= k;
      }
    }
    // complete Bell polynomials: B_{n+1} = sum_i C(n, i) B_{n-i} l_{i+1}
    bell[0] = 1.0;
    for (int n = 0; n < m_; ++n) {
      cplx s{};
      double binom = 1.0;
      for (int i = 0; i <= n; ++i) {
        s += binom * bell[n - i] * l[i + 1];
        binom = binom * (n - i) / (i + 1);
      }
      bell[n + 1] = s;
    }
    return std::exp(-V) * bell[m_];
  }

 private:
  WFactor wf_;
  const CouplingPoint* cp_;
  const SliceConfig* sc_;
  int m_;
  double fact_ = 1.0;
  std::vector<cplx> a_;
};

// ---------------------------------------------------------------------------
// Gaussian expectations.

/// Pivoted Cholesky X = P L L^T P^T. Row i of `L` belongs to vertex order[i]
/// and only uses xi_0..xi_min(i, rank-1).
struct PivotedRoot {
  Eigen::MatrixXd L;
  std::vector<int> order;
  int rank = 0;
};

inline PivotedRoot pivoted_root(const Eigen::MatrixXd& X, double tol = 1e-12) {
  const int n = static_cast<int>(X.rows());
  if (X.cols() != n) throw std::invalid_argument("pivoted_root: matrix not square");
  if (!X.isApprox(X.transpose(), 1e-12)) throw NotPSD("pivoted_root: matrix not symmetric");
  Eigen::MatrixXd A = X;
  PivotedRoot r;
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), 0);
  r.L = Eigen::MatrixXd::Zero(n, n);
  int k = 0;
  for (; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (A(r.order[i], r.order[i]) > A(r.order[piv], r.order[piv])) piv = i;
    const double d = A(r.order[piv], r.order[piv]);
    if (d < -1e-10) throw NotPSD("pivoted_root: negative pivot");
    if (d <= tol) break;
    std::swap(r.order[k], r.order[piv]);
    r.L.row(k).swap(r.L.row(piv));
    const double root = std::sqrt(d);
    r.L(k, k) = root;
    const int pk = r.order[k];
    for (int i = k + 1; i < n; ++i) r.L(i, k) = A(r.order[i], pk) / root;
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j) A(r.order[i], r.order[j]) -= r.L(i, k) * r.L(j, k);
  }
  r.rank = k;
  for (int i = k; i < n; ++i)
    for (int j = k; j < n; ++j)
      if (std::abs(A(r.order[i], r.order[j])) > 1e-10) throw NotPSD("pivoted_root: indefinite residual");
  return r;
}

struct GaussScheme {
  int nodes = 20;
  int max_tensor_rank = 3;
  std::size_t qmc_points = std::size_t{1} << 14;
  bool estimate_error = true;
};

namespace detail {

/// E[prod_i factor_i(sigma_i)] with sigma = L xi on the tensor Gauss-Hermite
/// grid. Partial products are formed as soon as a row is fully determined.
template <class S, class Factor>
S tensor_expectation(const PivotedRoot& root, const std::vector<Factor>& factors, const QuadratureRule& gh, S unit) {
  const int n = static_cast<int>(factors.size());
  const int r = root.rank;
  if (r == 0) {
    S prod = unit;
    for (int i = 0; i < n; ++i) prod *= factors[root.order[i]](0.0);
    return prod;
  }
  std::vector<double> partial(static_cast<std::size_t>(n) * (r + 1), 0.0);  // partial[d*n + i]
  std::vector<S> prod(r + 1, unit);
  std::vector<S> acc(r + 1, S{});
  std::function<void(int)> rec;
  const std::size_t q = gh.size();
  rec = [&](int d) {
    acc[d] = unit * 0.0;
    for (std::size_t t = 0; t < q; ++t) {
      const double xi = gh.nodes[t];
      double* cur = &partial[static_cast<std::size_t>(d + 1) * n];
      const double* prev = &partial[static_cast<std::size_t>(d) * n];
      for (int i = d; i < n; ++i) cur[i] = prev[i] + root.L(i, d) * xi;
      S p = prod[d] * factors[root.order[d]](cur[d]);
      if (d == r - 1) {
        for (int i = r; i < n; ++i) p *= factors[root.order[i]](cur[i]);
        acc[d] += p * gh.weights[t];
      } else {
        prod[d + 1] = p;
        rec(d + 1);
        acc[d] += acc[d + 1] * gh.weights[t];
      }
    }
  };
  rec(0);
  return acc[0];
}

template <class S, class Factor>
S quasi_random_expectation(const PivotedRoot& root, const std::vector<Factor>& factors, std::size_t points, S unit) {
  const int n = static_cast<int>(factors.size());
  const int r = root.rank;
  S acc = unit * 0.0;
  std::vector<double> sigma(n);
  for (std::size_t s = 1; s <= points; ++s) {
    const auto u = halton_point(s, r);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    for (int k = 0; k < r; ++k) {
      const double xi = normal_quantile(u[k]);
      for (int i = k; i < n; ++i) sigma[i] += root.L(i, k) * xi;
    }
    S p = unit;
    for (int i = 0; i < n; ++i) p *= factors[root.order[i]](sigma[i]);
    acc += p;
  }
  return acc * (1.0 / static_cast<double>(points));
}

}  // namespace detail

/// E[prod_a factor_a(sigma_a)] for sigma ~ N(0, X). Tensor Gauss-Hermite up
/// to `max_tensor_rank` effective dimensions, Halton points otherwise. The
/// error is the difference against a coarser rule.
template <class S, class Factor>
Estimate<S> gaussian_expectation_generic(const Eigen::MatrixXd& X, const std::vector<Factor>& factors,
                                         const GaussScheme& scheme, S unit) {
  if (static_cast<int>(factors.size()) != X.rows()) throw std::invalid_argument("gaussian_expectation: size mismatch");
  const PivotedRoot root = pivoted_root(X);
  Estimate<S> est;
  if (root.rank <= scheme.max_tensor_rank) {
    est.value = detail::tensor_expectation(root, factors, gauss_hermite(scheme.nodes), unit);
    if (scheme.estimate_error && root.rank > 0) {
      const int coarse = std::max(1, scheme.nodes * 3 / 4);
      est.error = magnitude(est.value - detail::tensor_expectation(root, factors, gauss_hermite(coarse), unit));
    }
  } else {
    est.value = detail::quasi_random_expectation(root, factors, scheme.qmc_points, unit);
    if (scheme.estimate_error)
      est.error = magnitude(est.value - detail::quasi_random_expectation(root, factors, scheme.qmc_points / 2, unit));
  }
  if (!std::isfinite(magnitude(est.value))) throw QuadratureNoConverge("gaussian_expectation: non-finite value");
  return est;
}

struct FactorSpec {
  int vertex = 0;
  int derivative = 0;
  WFactor factor;
};

/// E[prod_a (d^{m_a} f_a)(sigma_a)] for sigma ~ N(0, X); one FactorSpec per
/// vertex of X, in vertex order.
inline Estimate<cplx> gaussian_expectation(const Eigen::MatrixXd& X, const std::vector<FactorSpec>& specs,
                                           const CouplingPoint& cp, const SliceConfig& sc,
                                           const GaussScheme& scheme = {}) {
  std::vector<std::function<cplx(double)>> factors(specs.size());
  for (const auto& s : specs) {
    if (s.vertex < 0 || s.vertex >= static_cast<int>(specs.size()))
      throw std::invalid_argument("gaussian_expectation: vertex index out of range");
    factors[s.vertex] = [s, &cp, &sc](double sigma) { return w_factor_derivative(s.factor, sigma, cp, sc, s.derivative); };
  }
  return gaussian_expectation_generic(X, factors, scheme, cplx{1.0});
}

}  // namespace mlve
