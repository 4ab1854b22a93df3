#pragma once

// Grassmann Gaussian integrals with covariance C, normalized so that
// int dmu_C chibar_i chi_j = C_ij. A balanced monomial integrates to a
// signed determinant; a finite exterior algebra serves as an independent
// oracle.
//
// Canonical generator order: by field, barred before unbarred.

#include "mlve/errors.hpp"
#include "mlve/forests.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

namespace mlve {

struct Generator {
  int field = 0;
  bool barred = false;
  auto operator<=>(const Generator&) const = default;
  int canonical_index() const { return 2 * field + (barred ? 0 : 1); }
};

inline Generator chi_bar(int field) { return {field, true}; }
inline Generator chi(int field) { return {field, false}; }

using GrassmannMonomial = std::vector<Generator>;

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Monomial with a sign; sign 0 means the monomial vanished.
struct SignedMonomial {
  int sign = 1;
  GrassmannMonomial generators;
};

/// Left derivative d/dg of a monomial.
inline SignedMonomial left_derivative(Generator g, const SignedMonomial& m) {
  if (m.sign == 0) return m;
  auto it = std::find(m.generators.begin(), m.generators.end(), g);
  if (it == m.generators.end()) return {0, {}};
  SignedMonomial r = m;
  const auto pos = it - m.generators.begin();
  if (pos % 2 == 1) r.sign = -r.sign;
  r.generators.erase(r.generators.begin() + pos);
  return r;
}

/// Label of a block field: the covariance between two fields is Y of their
/// blocks when colour and slice agree, zero otherwise.
struct FieldLabel {
  int block = 0;
  int color = 1;
  int slice = 0;
};

template <class T>
Matrix<T> labeled_covariance(const Matrix<T>& Y, const std::vector<FieldLabel>& labels) {
  const int m = static_cast<int>(labels.size());
  Matrix<T> C = Matrix<T>::Zero(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      if (labels[a].color == labels[b].color && labels[a].slice == labels[b].slice)
        C(a, b) = Y(labels[a].block, labels[b].block);
  return C;
}

namespace detail {

inline int permutation_sign(std::vector<int> p) {
  int sign = 1;
  for (std::size_t i = 0; i < p.size(); ++i)
    while (p[i] != static_cast<int>(i)) {
      std::swap(p[i], p[p[i]]);
      sign = -sign;
    }
  return sign;
}

/// Leibniz expansion up to 6x6 (exact on integer entries), LU beyond.
template <class T>
T determinant(const Matrix<T>& A) {
  const int m = static_cast<int>(A.rows());
  if (m == 0) return T(1);
  if (m > 6) return A.determinant();
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  T sum = T(0);
  do {
    T prod = T(permutation_sign(perm));
    for (int i = 0; i < m && prod != T(0); ++i) prod *= A(i, perm[i]);
    sum += prod;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return sum;
}

}  // namespace detail

/// int dmu_C of the monomial as a signed determinant. Throws
/// UnbalancedMonomial if the numbers of barred and unbarred generators differ.
template <class T>
T grassmann_gaussian(const Matrix<T>& C, const GrassmannMonomial& m) {
  std::vector<int> bars, unbars;
  for (int i = 0; i < static_cast<int>(m.size()); ++i) (m[i].barred ? bars : unbars).push_back(i);
  if (bars.size() != unbars.size()) throw UnbalancedMonomial("grassmann_gaussian: unbalanced monomial");
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j)
      if (m[i] == m[j]) return T(0);
  for (const auto& g : m)
    if (g.field < 0 || g.field >= C.rows()) throw std::out_of_range("grassmann_gaussian: field outside covariance");
  // target order chibar_{i1} chi_{j1} chibar_{i2} chi_{j2} ...
  const std::size_t k = bars.size();
  std::vector<int> target;
  target.reserve(m.size());
  for (std::size_t r = 0; r < k; ++r) {
    target.push_back(bars[r]);
    target.push_back(unbars[r]);
  }
  const int sign = detail::permutation_sign(target);
  Matrix<T> S(k, k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) S(r, c) = C(m[bars[r]].field, m[unbars[c]].field);
  return T(sign) * detail::determinant(S);
}

template <class T>
T grassmann_gaussian(const Matrix<T>& C, const SignedMonomial& m) {
  if (m.sign == 0) return T(0);
  return T(m.sign) * grassmann_gaussian(C, m.generators);
}

/// Exterior algebra on 2*fields generators with coefficient table keyed by
/// the canonical-order bitmask.
template <class T>
class ExteriorElement {
 public:
  static constexpr int kMaxFields = 10;

  explicit ExteriorElement(int fields) : fields_(fields) {
    if (fields > kMaxFields) throw CapExceeded("exterior algebra: more than 10 generator pairs");
  }
  static ExteriorElement one(int fields) {
    ExteriorElement e(fields);
    e.terms_[0] = T(1);
    return e;
  }

  const std::map<std::uint32_t, T>& terms() const { return terms_; }
  T scalar_part() const {
    auto it = terms_.find(0);
    return it == terms_.end() ? T(0) : it->second;
  }

  /// this * g (right multiplication by a single generator).
  ExteriorElement times(Generator g) const {
    const int idx = g.canonical_index();
    const std::uint32_t bit = 1u << idx;
    ExteriorElement r(fields_);
    for (const auto& [mask, c] : terms_) {
      if (mask & bit) continue;
      // move g left past every generator with a larger index
      const int after = std::popcount(mask & ~((bit << 1) - 1));
      r.add(mask | bit, after % 2 ? -c : c);
    }
    return r;
  }

  ExteriorElement derivative(Generator g) const {
    const int idx = g.canonical_index();
    const std::uint32_t bit = 1u << idx;
    ExteriorElement r(fields_);
    for (const auto& [mask, c] : terms_) {
      if (!(mask & bit)) continue;
      const int before = std::popcount(mask & (bit - 1));
      r.add(mask & ~bit, before % 2 ? -c : c);
    }
    return r;
  }

  void add(std::uint32_t mask, T c) {
    auto [it, inserted] = terms_.emplace(mask, c);
    if (!inserted) it->second += c;
  }
  void add(const ExteriorElement& o, T scale) {
    for (const auto& [mask, c] : o.terms_) add(mask, scale * c);
  }
  bool empty() const { return terms_.empty(); }

 private:
  int fields_;
  std::map<std::uint32_t, T> terms_;
};

/// [exp(sum_ij C_ij d/dchi_j d/dchibar_i) F] at chi = 0, expanded term by
/// term in the exterior algebra; odd or unbalanced monomials give 0.
template <class T>
T brute_force_oracle(const Matrix<T>& C, const GrassmannMonomial& m) {
  const int fields = static_cast<int>(C.rows());
  ExteriorElement<T> f = ExteriorElement<T>::one(fields);
  for (const auto& g : m) f = f.times(g);
  T total = f.scalar_part();
  T inv_fact = T(1);
  for (int order = 1; !f.empty(); ++order) {
    ExteriorElement<T> next(fields);
    for (int i = 0; i < fields; ++i)
      for (int j = 0; j < fields; ++j) {
        if (C(i, j) == T(0)) continue;
        next.add(f.derivative(chi_bar(i)).derivative(chi(j)), C(i, j));
      }
    f = std::move(next);
    inv_fact /= T(order);
    total += inv_fact * f.scalar_part();
  }
  return total;
}

/// Fermionic factor of a set of detailed edges between fields 0..m-1, each
/// field carrying chibar_v chi_v: the sum over edge orientations of
/// int dmu_C prod_e (d/dchi_to d/dchibar_from) prod_v chibar_v chi_v.
template <class T>
T fermionic_edge_factor(const Matrix<T>& C, const std::vector<Edge>& edges) {
  const int m = static_cast<int>(C.rows());
  SignedMonomial base;
  for (int v = 0; v < m; ++v) {
    base.generators.push_back(chi_bar(v));
    base.generators.push_back(chi(v));
  }
  const std::size_t E = edges.size();
  T sum = T(0);
  for (std::uint32_t orient = 0; orient < (1u << E); ++orient) {
    SignedMonomial cur = base;
    for (std::size_t e = 0; e < E && cur.sign != 0; ++e) {
      int from = edges[e].a, to = edges[e].b;
      if (orient & (1u << e)) std::swap(from, to);
      cur = left_derivative(chi(to), left_derivative(chi_bar(from), cur));
    }
    if (cur.sign != 0) sum += grassmann_gaussian(C, cur);
  }
  return sum;
}

}  // namespace mlve
