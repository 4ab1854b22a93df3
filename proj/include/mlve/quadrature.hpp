#pragma once

// One-dimensional Gauss rules (Golub-Welsch) and a Halton sequence for the
// quasi-random fallbacks. Rules are cached per node count.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace mlve {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Symmetric tridiagonal Jacobi matrix with zero diagonal and the given
// off-diagonal entries; weights are mu0 * (first eigenvector component)^2.
inline QuadratureRule golub_welsch(const std::vector<double>& offdiag, double mu0) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) J(i, i + 1) = J(i + 1, i) = offdiag[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v * v;
  }
  // symmetrize: both families are even rules
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

template <class Make>
const QuadratureRule& cached_rule(int n, Make make, std::map<int, std::unique_ptr<QuadratureRule>>& cache,
                                  std::mutex& mu) {
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<QuadratureRule>(make(n))).first;
  return *it->second;
}

}  // namespace detail

/// Gauss-Hermite rule for the standard normal density: sum_i w_i f(x_i) ~ E[f(Z)].
inline const QuadratureRule& gauss_hermite(int n) {
  if (n < 1 || n > 200) throw std::invalid_argument("gauss_hermite: node count out of range");
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mu;
  return detail::cached_rule(
      n,
      [](int m) {
        if (m == 1) return QuadratureRule{{0.0}, {1.0}};
        std::vector<double> off(m - 1);
        for (int k = 1; k < m; ++k) off[k - 1] = std::sqrt(static_cast<double>(k));
        return detail::golub_welsch(off, 1.0);
      },
      cache, mu);
}

/// Gauss-Legendre rule on [0, 1] with weights summing to 1.
inline const QuadratureRule& gauss_legendre01(int n) {
  if (n < 1 || n > 200) throw std::invalid_argument("gauss_legendre01: node count out of range");
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mu;
  return detail::cached_rule(
      n,
      [](int m) {
        QuadratureRule r;
        if (m == 1) {
          r = QuadratureRule{{0.0}, {2.0}};
        } else {
          std::vector<double> off(m - 1);
          for (int k = 1; k < m; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
          r = detail::golub_welsch(off, 2.0);
        }
        for (std::size_t i = 0; i < r.size(); ++i) {
          r.nodes[i] = 0.5 * (r.nodes[i] + 1.0);
          r.weights[i] *= 0.5;
        }
        return r;
      },
      cache, mu);
}

/// Radical-inverse Halton point `index` (index >= 1) in [0,1)^dims.
inline std::vector<double> halton_point(std::size_t index, int dims) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (dims > 16) throw std::invalid_argument("halton_point: at most 16 dimensions");
  std::vector<double> x(dims);
  for (int d = 0; d < dims; ++d) {
    const int b = kPrimes[d];
    double f = 1.0, r = 0.0;
    for (std::size_t i = index; i > 0; i /= b) {
      f /= b;
      r += f * static_cast<double>(i % b);
    }
    x[d] = r;
  }
  return x;
}

inline double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, u);
}

}  // namespace mlve
