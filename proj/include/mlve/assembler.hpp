#pragma once

// The tree expansion of log Z and of its cumulants,
//
//   kappa = sum_n 1/n! sum_{two-level spanning trees} sum_{labels}
//           prod_{Bosonic blocks B} I_B  *  F,
//
// where interaction vertices carry a slice and source vertices carry exactly
// one external leg (legs are injected into distinct vertices, so n >= k).
// I_B is the w-integrated Gaussian expectation of the block's vertex factors,
// each differentiated once per incident Bosonic edge. F is the w-integrated
// Grassmann factor of the Fermionic edges; it does not depend on g.
//
// Labeled terms are grouped into classes (n, F shape, multiset of block
// shapes) so every distinct block integral is evaluated once per coupling.

#include "mlve/errors.hpp"
#include "mlve/forests.hpp"
#include "mlve/grassmann.hpp"
#include "mlve/model.hpp"
#include "mlve/oracle.hpp"
#include "mlve/parallel.hpp"
#include "mlve/quadrature.hpp"
#include "mlve/replica.hpp"
#include "mlve/series.hpp"
#include "mlve/taylor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

namespace mlve {

/// fn >= 0: interaction vertex in slice position fn; fn < 0: source vertex
/// carrying momentum -fn.
using FunctionId = int;

inline constexpr int kMaxTreeOrder = 5;

struct ReplicaAssignment {
  std::vector<int> slice;            // j_a
  std::vector<int> color;            // 1 interaction, 2 source
  std::vector<int> fermionic_color;  // same as color
  std::vector<int> leg_vertex;       // q -> a_q
};

struct TermDescriptor {
  int n = 0;
  Jungle jungle;
  ReplicaAssignment assignment;
  double weight = 0.0;
};

namespace detail {

inline double factorial_d(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Calls visit(jungle, blocks, fn, leg_vertex) for every labeled spanning
/// two-level tree on n vertices whose Fermionic edges join interaction
/// vertices of one slice (all others have a vanishing Grassmann factor).
/// Returns the number of labeled terms before that filter.
template <class Visit>
long long for_each_labeled_term(const SliceConfig& sc, const ExternalMomenta& pm, int n, Visit&& visit) {
  const int k = pm.k();
  if (n < std::max(1, k)) return 0;
  const int S = sc.slice_count();
  long long total = 0;
  std::vector<FunctionId> fn(n);
  std::vector<int> leg(k), free_vertices;
  std::vector<char> used(n);
  for (const auto& tree : spanning_trees(n, kMaxTreeOrder)) {
    const std::size_t E = tree.edges.size();
    for (std::uint32_t mask = 0; mask < (1u << E); ++mask) {
      Jungle j{n, {}, {}};
      for (std::size_t i = 0; i < E; ++i) (mask & (1u << i) ? j.fermionic : j.bosonic).push_back(tree.edges[i]);
      const BlockPartition bp = j.blocks();
      std::function<void(int)> inject = [&](int q) {
        if (q == k) {
          free_vertices.clear();
          for (int v = 0; v < n; ++v)
            if (!used[v]) free_vertices.push_back(v);
          const int m = static_cast<int>(free_vertices.size());
          std::vector<int> s(m, 0);
          while (true) {
            ++total;
            for (int i = 0; i < m; ++i) fn[free_vertices[i]] = s[i];
            bool ok = true;
            for (const auto& e : j.fermionic)
              if (fn[e.a] < 0 || fn[e.b] < 0 || fn[e.a] != fn[e.b]) {
                ok = false;
                break;
              }
            if (ok) visit(j, bp, fn, leg);
            int pos = m - 1;
            while (pos >= 0 && ++s[pos] == S) s[pos--] = 0;
            if (pos < 0) break;
          }
          return;
        }
        for (int v = 0; v < n; ++v) {
          if (used[v]) continue;
          used[v] = 1;
          leg[q] = v;
          fn[v] = -pm.momenta[q];
          inject(q + 1);
          used[v] = 0;
        }
      };
      std::fill(used.begin(), used.end(), 0);
      inject(0);
    }
  }
  return total;
}

/// Canonical form of a labeled tree block (rooted encodings, minimized over roots).
inline std::string block_key(const std::vector<int>& verts, const std::vector<std::vector<int>>& adj,
                             const std::vector<FunctionId>& fn) {
  std::function<std::string(int, int)> enc = [&](int v, int parent) {
    std::vector<std::string> kids;
    for (int u : adj[v])
      if (u != parent) kids.push_back(enc(u, v));
    std::sort(kids.begin(), kids.end());
    std::string s = "(" + std::to_string(fn[v]);
    for (const auto& c : kids) s += c;
    return s + ")";
  };
  std::string best;
  for (int r : verts) {
    std::string s = enc(r, -1);
    if (best.empty() || s < best) best = std::move(s);
  }
  return best;
}

/// Canonical form of the Fermionic data: the tree of blocks joined by
/// Fermionic edges, each block listing its interaction vertices by slice and
/// the subtrees hanging off them. Sources do not enter.
inline std::string fermion_key(const Jungle& j, const BlockPartition& bp, const std::vector<FunctionId>& fn) {
  std::vector<std::vector<int>> fadj(j.n);
  for (const auto& e : j.fermionic) {
    fadj[e.a].push_back(e.b);
    fadj[e.b].push_back(e.a);
  }
  std::function<std::string(int, int, int)> enc = [&](int block, int entry, int parent_block) {
    std::vector<std::string> items;
    for (int v : bp.blocks[block]) {
      if (fn[v] < 0) continue;
      std::vector<std::string> subs;
      for (int u : fadj[v])
        if (bp.block_of[u] != parent_block) subs.push_back(enc(bp.block_of[u], u, block));
      std::sort(subs.begin(), subs.end());
      std::string s = (v == entry ? "*" : "") + std::to_string(fn[v]) + "[";
      for (const auto& t : subs) s += t;
      items.push_back(s + "]");
    }
    std::sort(items.begin(), items.end());
    std::string s = "{";
    for (const auto& t : items) s += t + ",";
    return s + "}";
  };
  std::string best;
  for (int b = 0; b < bp.size(); ++b) {
    std::string s = enc(b, -1, -1);
    if (best.empty() || s < best) best = std::move(s);
  }
  return best;
}

}  // namespace detail

/// Every admissible labeled term of order n (intended for inspection and tests).
inline std::vector<TermDescriptor> enumerate_terms(const SliceConfig& sc, const ExternalMomenta& pm, int n) {
  validate(pm, sc);
  if (n > kMaxTreeOrder) throw CapExceeded("enumerate_terms: n above the cap");
  std::vector<TermDescriptor> out;
  detail::for_each_labeled_term(sc, pm, n, [&](const Jungle& j, const BlockPartition&, const std::vector<FunctionId>& fn,
                                              const std::vector<int>& leg) {
    TermDescriptor t;
    t.n = n;
    t.jungle = j;
    t.weight = 1.0 / detail::factorial_d(n);
    for (int v = 0; v < n; ++v) {
      const bool src = fn[v] < 0;
      t.assignment.slice.push_back(sc.j_min() + (src ? sc.slice_position(-fn[v]) : fn[v]));
      t.assignment.color.push_back(src ? 2 : 1);
      t.assignment.fermionic_color.push_back(src ? 2 : 1);
    }
    t.assignment.leg_vertex = leg;
    out.push_back(std::move(t));
  });
  return out;
}

struct TreeBlock {
  std::vector<FunctionId> fn;
  std::vector<Edge> edges;  // local vertex indices
  std::vector<int> degree;
};

struct TreeFermion {
  Jungle jungle;
  std::vector<FunctionId> fn;
  double value = 0.0;
};

struct TreeClass {
  int n = 0;
  int fermion = 0;
  std::vector<int> blocks;
  long long count = 0;
};

/// Value of the w-integrated Grassmann factor of a representative term.
inline double evaluate_fermion(const Jungle& j, const std::vector<FunctionId>& fn) {
  const BlockPartition bp = j.blocks();
  std::vector<int> field_of(j.n, -1);
  std::vector<int> fields;
  for (int v = 0; v < j.n; ++v)
    if (fn[v] >= 0) {
      field_of[v] = static_cast<int>(fields.size());
      fields.push_back(v);
    }
  std::vector<Edge> fedges;
  for (const auto& e : j.fermionic) fedges.push_back({field_of[e.a], field_of[e.b]});
  std::vector<FieldLabel> labels;
  for (int v : fields) labels.push_back({bp.block_of[v], 1, fn[v]});
  auto integrand = [&](std::span<const double> w) {
    const Matrix<double> Y = y_matrix(j, w, bp);
    return fermionic_edge_factor(labeled_covariance(Y, labels), fedges);
  };
  const int E = static_cast<int>(j.fermionic.size());
  const int q = (static_cast<int>(fields.size()) + E) / 2 + 2;
  return w_integrate(E, integrand, CubatureScheme{CubatureKind::OrderedSimplex, q, 0}).value;
}

/// The g-independent part of the expansion for fixed slices, momenta and
/// truncation: block shapes, Grassmann factors and class multiplicities.
class LveStructure {
 public:
  LveStructure(SliceConfig sc, ExternalMomenta pm, int n_max) : sc_(std::move(sc)), pm_(std::move(pm)), n_max_(n_max) {
    validate(pm_, sc_);
    if (n_max_ > kMaxTreeOrder) throw CapExceeded("tree expansion: n_max above the cap");
    n_min_ = std::max(1, pm_.k());
    if (n_max_ < n_min_) throw std::invalid_argument("tree expansion: n_max below max(1, k)");
    build();
  }

  const SliceConfig& slices() const { return sc_; }
  const ExternalMomenta& momenta() const { return pm_; }
  int n_min() const { return n_min_; }
  int n_max() const { return n_max_; }
  const std::vector<TreeBlock>& blocks() const { return blocks_; }
  const std::vector<TreeFermion>& fermions() const { return fermions_; }
  const std::vector<TreeClass>& classes() const { return classes_; }
  /// Indices of blocks that occur in a class with non-zero Grassmann factor.
  const std::vector<int>& live_blocks() const { return live_blocks_; }
  long long labeled_terms() const { return labeled_terms_; }
  long long admissible_terms() const { return admissible_terms_; }

 private:
  void build() {
    std::map<std::string, int> block_ids, fermion_ids;
    std::map<std::tuple<int, int, std::vector<int>>, long long> counts;
    for (int n = n_min_; n <= n_max_; ++n) {
      labeled_terms_ += detail::for_each_labeled_term(
          sc_, pm_, n,
          [&](const Jungle& j, const BlockPartition& bp, const std::vector<FunctionId>& fn, const std::vector<int>&) {
            ++admissible_terms_;
            const std::string fk = detail::fermion_key(j, bp, fn);
            auto fit = fermion_ids.find(fk);
            if (fit == fermion_ids.end()) {
              fit = fermion_ids.emplace(fk, static_cast<int>(fermions_.size())).first;
              fermions_.push_back({j, fn, evaluate_fermion(j, fn)});
            }
            if (std::abs(fermions_[fit->second].value) < 1e-12) return;
            std::vector<std::vector<int>> adj(n);
            for (const auto& e : j.bosonic) {
              adj[e.a].push_back(e.b);
              adj[e.b].push_back(e.a);
            }
            std::vector<int> ids;
            for (const auto& verts : bp.blocks) {
              const std::string bk = detail::block_key(verts, adj, fn);
              auto bit = block_ids.find(bk);
              if (bit == block_ids.end()) {
                bit = block_ids.emplace(bk, static_cast<int>(blocks_.size())).first;
                blocks_.push_back(make_block(verts, j.bosonic, fn));
              }
              ids.push_back(bit->second);
            }
            std::sort(ids.begin(), ids.end());
            ++counts[{n, fit->second, ids}];
          });
    }
    std::vector<char> live(blocks_.size(), 0);
    for (const auto& [key, c] : counts) {
      const auto& [n, f, ids] = key;
      classes_.push_back({n, f, ids, c});
      for (int b : ids) live[b] = 1;
    }
    for (std::size_t b = 0; b < live.size(); ++b)
      if (live[b]) live_blocks_.push_back(static_cast<int>(b));
  }

  static TreeBlock make_block(const std::vector<int>& verts, const std::vector<Edge>& bosonic,
                              const std::vector<FunctionId>& fn) {
    TreeBlock b;
    std::map<int, int> local;
    for (int v : verts) {
      local[v] = static_cast<int>(b.fn.size());
      b.fn.push_back(fn[v]);
    }
    b.degree.assign(verts.size(), 0);
    for (const auto& e : bosonic) {
      auto ia = local.find(e.a);
      if (ia == local.end()) continue;
      const Edge le = make_edge(ia->second, local.at(e.b));
      b.edges.push_back(le);
      ++b.degree[le.a];
      ++b.degree[le.b];
    }
    return b;
  }

  SliceConfig sc_;
  ExternalMomenta pm_;
  int n_min_ = 1, n_max_ = 1;
  std::vector<TreeBlock> blocks_;
  std::vector<TreeFermion> fermions_;
  std::vector<TreeClass> classes_;
  std::vector<int> live_blocks_;
  long long labeled_terms_ = 0, admissible_terms_ = 0;
};

/// Gauss-Hermite nodes per axis and ordered-simplex Gauss-Legendre nodes per
/// axis, indexed by block size.
struct LveOptions {
  int threads = 0;
  std::array<int, kMaxTreeOrder + 1> gauss_nodes = {0, 48, 20, 8, 6, 4};
  std::array<int, kMaxTreeOrder + 1> simplex_nodes = {0, 1, 8, 5, 4, 3};
  bool estimate_error = true;
};

struct CumulantResult {
  int k = 0;
  std::vector<int> momenta;
  cplx g{};
  int n_min = 1;
  int n_max = 1;
  std::vector<cplx> partial_sums;  // S_{n_min} .. S_{n_max}
  std::vector<cplx> increments;    // S_n - S_{n-1}, with S_{n_min - 1} = 0
  std::vector<double> order_errors;
  cplx value{};
  double quadrature_error = 0.0;
  double truncation_error = 0.0;
  double error = 0.0;
  bool converged = false;
  bool resolved = false;  // last three increments at least their quadrature error
  double last_ratio = std::numeric_limits<double>::quiet_NaN();
  long long labeled_terms = 0;
  std::size_t classes = 0;
  std::size_t unique_blocks = 0;
};

namespace detail {

inline WFactor factor_for(FunctionId fn, const SliceConfig& sc) {
  if (fn >= 0) return {0, VertexKind::Interaction, sc.j_min() + fn, {}};
  return {0, VertexKind::Source, sc.j_min() + sc.slice_position(-fn), {-fn}};
}

/// m-th sigma-derivative of h(lambda sigma) as a polynomial in lambda of
/// degree D: coefficient of lambda^{m+r} is c_{m+r} (m+r)!/r! sigma^r.
struct SeriesFactor {
  std::vector<cplx> coef;  // coef[r], r = 0..D-m
  int m = 0;
  int D = 0;
  Jet<cplx> operator()(double s) const {
    Jet<cplx> j(cplx{}, D);
    double p = 1.0;
    for (std::size_t r = 0; r < coef.size(); ++r) {
      j[m + static_cast<int>(r)] = coef[r] * p;
      p *= s;
    }
    return j;
  }
};

template <class S, class Factor>
S block_integral(const TreeBlock& b, const std::vector<Factor>& factors, int gh, int q, S unit) {
  const int size = static_cast<int>(b.fn.size());
  const int E = static_cast<int>(b.edges.size());
  const auto& rule_h = gauss_hermite(gh);
  if (E == 0) {
    const PivotedRoot root = pivoted_root(Eigen::MatrixXd::Identity(size, size));
    return tensor_expectation(root, factors, rule_h, unit);
  }
  const auto& rule = cubature_rule(E, CubatureScheme{CubatureKind::OrderedSimplex, q, 0});
  S acc = unit * 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const PivotedRoot root = pivoted_root(x_matrix(size, b.edges, rule.point(i)));
    acc += tensor_expectation(root, factors, rule_h, unit) * rule.weights[i];
  }
  return acc;
}

/// Neumaier-compensated complex accumulator.
struct CompensatedSum {
  double re = 0, im = 0, cre = 0, cim = 0;
  static void add(double& s, double& c, double x) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  void add(cplx z) {
    add(re, cre, z.real());
    add(im, cim, z.imag());
  }
  cplx value() const { return {re + cre, im + cim}; }
};

template <class S>
struct OrderSums {
  std::vector<S> contribution;  // per n, n_min..n_max
  std::vector<double> error;
};

/// Sums classes in their canonical order given the block values.
template <class S>
OrderSums<S> assemble(const LveStructure& st, const std::vector<Estimate<S>>& block_values, S unit) {
  const int orders = st.n_max() - st.n_min() + 1;
  OrderSums<S> out;
  out.contribution.assign(orders, unit * 0.0);
  out.error.assign(orders, 0.0);
  std::vector<CompensatedSum> comp(orders);
  for (const auto& c : st.classes()) {
    const double w = static_cast<double>(c.count) / factorial_d(c.n) * st.fermions()[c.fermion].value;
    S prod = unit * w;
    double err = 0.0;
    for (std::size_t i = 0; i < c.blocks.size(); ++i) {
      prod *= block_values[c.blocks[i]].value;
      double e = std::abs(w) * block_values[c.blocks[i]].error;
      for (std::size_t t = 0; t < c.blocks.size(); ++t)
        if (t != i) e *= magnitude(block_values[c.blocks[t]].value);
      err += e;
    }
    const int o = c.n - st.n_min();
    if constexpr (std::is_same_v<S, cplx>)
      comp[o].add(prod);
    else
      out.contribution[o] += prod;
    out.error[o] += err;
  }
  if constexpr (std::is_same_v<S, cplx>)
    for (int o = 0; o < orders; ++o) out.contribution[o] = comp[o].value();
  return out;
}

inline bool decreasing(double a, double b) { return b == 0.0 || b < a; }

}  // namespace detail

/// Block integrals at one coupling, in the order of st.blocks() (blocks that
/// never meet a non-zero Grassmann factor are left at zero).
inline std::vector<Estimate<cplx>> evaluate_blocks(const LveStructure& st, const CouplingPoint& cp,
                                                   const LveOptions& opt = {}) {
  const SliceConfig& sc = st.slices();
  std::vector<Estimate<cplx>> values(st.blocks().size());
  const auto& live = st.live_blocks();
  parallel_for(live.size(), resolve_threads(opt.threads), [&](std::size_t i) {
    const TreeBlock& b = st.blocks()[live[i]];
    const int size = static_cast<int>(b.fn.size());
    std::vector<VertexFunction> factors;
    for (int v = 0; v < size; ++v) factors.emplace_back(detail::factor_for(b.fn[v], sc), cp, sc, b.degree[v]);
    const int gh = opt.gauss_nodes[size], q = opt.simplex_nodes[size];
    Estimate<cplx> est;
    est.value = detail::block_integral(b, factors, gh, q, cplx{1.0});
    if (opt.estimate_error) {
      const cplx coarse = detail::block_integral(b, factors, std::max(2, gh * 3 / 4), std::max(1, q - 1), cplx{1.0});
      est.error = std::abs(est.value - coarse);
    }
    if (!std::isfinite(est.value.real()) || !std::isfinite(est.value.imag()))
      throw QuadratureNoConverge("block integral is not finite");
    values[live[i]] = est;
  });
  return values;
}

/// Fills partial sums, increments, errors and the convergence flag. The flag
/// requires at least three increments whose moduli strictly decrease (an
/// exactly vanishing increment counts as decreasing) and are each at least
/// as large as their quadrature error.
inline void finalize_result(CumulantResult& r, const std::vector<cplx>& contributions, const std::vector<double>& errors) {
  cplx s{};
  r.partial_sums.clear();
  r.increments.clear();
  r.order_errors = errors;
  r.quadrature_error = 0.0;
  for (std::size_t o = 0; o < contributions.size(); ++o) {
    s += contributions[o];
    r.partial_sums.push_back(s);
    r.increments.push_back(contributions[o]);
    r.quadrature_error += errors[o];
  }
  r.value = s;
  r.truncation_error = contributions.size() > 1 ? std::abs(contributions.back()) : 0.0;
  r.error = r.quadrature_error + r.truncation_error;
  const std::size_t m = r.increments.size();
  if (m >= 2) {
    const double b = std::abs(r.increments[m - 2]), c = std::abs(r.increments[m - 1]);
    r.last_ratio = b == 0.0 ? (c == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) : c / b;
  }
  if (m >= 3) {
    const double a = std::abs(r.increments[m - 3]), b = std::abs(r.increments[m - 2]),
                 c = std::abs(r.increments[m - 1]);
    r.resolved = a >= errors[m - 3] && b >= errors[m - 2] && c >= errors[m - 1];
    r.converged = r.resolved && detail::decreasing(a, b) && detail::decreasing(b, c);
  }
}

inline CumulantResult cumulant_lve(const LveStructure& st, const CouplingPoint& cp, const LveOptions& opt = {}) {
  if (std::abs(cp.gamma) >= std::numbers::pi / 2) throw BranchCut("cumulant_lve: Arg g = pi is excluded");
  const auto values = evaluate_blocks(st, cp, opt);
  const auto sums = detail::assemble(st, values, cplx{1.0});
  CumulantResult r;
  r.k = st.momenta().k();
  r.momenta = st.momenta().momenta;
  r.g = cp.g;
  r.n_min = st.n_min();
  r.n_max = st.n_max();
  r.labeled_terms = st.labeled_terms();
  r.classes = st.classes().size();
  r.unique_blocks = st.live_blocks().size();
  finalize_result(r, sums.contribution, sums.error);
  return r;
}

inline CumulantResult cumulant_lve(const CouplingPoint& cp, const SliceConfig& sc, const ExternalMomenta& pm, int n_max,
                                   const LveOptions& opt = {}) {
  return cumulant_lve(LveStructure(sc, pm, n_max), cp, opt);
}

/// Taylor coefficients in g of the truncated tree expansion, obtained by
/// carrying every block integral as a polynomial in lambda (the integrands
/// are then polynomial in sigma and in the simplex variables, so the Gauss
/// rules below are exact). Exact through order n_max - k.
inline SeriesCoefficients<cplx> reexpand_in_g(const SliceConfig& sc, const ExternalMomenta& pm, int n_max, int orders,
                                              const LveOptions& opt = {}) {
  if (orders < 0 || orders > 3) throw std::invalid_argument("reexpand_in_g: orders must be in [0, 3]");
  if (n_max < orders + pm.k()) throw std::invalid_argument("reexpand_in_g: n_max must be at least orders + k");
  const LveStructure st(sc, pm, n_max);
  const int D = 2 * orders + 1;
  std::map<FunctionId, std::vector<cplx>> taylor;
  for (int b : st.live_blocks())
    for (FunctionId fn : st.blocks()[b].fn)
      if (!taylor.count(fn)) taylor[fn] = w_factor_taylor(detail::factor_for(fn, sc), sc, D);
  const Jet<cplx> unit(cplx{1.0}, D);
  std::vector<Estimate<Jet<cplx>>> values(st.blocks().size());
  const auto& live = st.live_blocks();
  parallel_for(live.size(), resolve_threads(opt.threads), [&](std::size_t i) {
    const TreeBlock& b = st.blocks()[live[i]];
    std::vector<detail::SeriesFactor> factors;
    for (std::size_t v = 0; v < b.fn.size(); ++v) {
      detail::SeriesFactor f;
      f.m = b.degree[v];
      f.D = D;
      const auto& c = taylor.at(b.fn[v]);
      double ratio = 1.0;  // (m+r)!/r!
      for (int t = 1; t <= f.m; ++t) ratio *= t;
      for (int r = 0; f.m + r <= D; ++r) {
        if (r > 0) ratio *= static_cast<double>(f.m + r) / r;
        f.coef.push_back(c[f.m + r] * ratio);
      }
      factors.push_back(std::move(f));
    }
    const int E = static_cast<int>(b.edges.size());
    values[live[i]].value = detail::block_integral(b, factors, D / 2 + 2, (D / 2 + E) / 2 + 2, unit);
  });
  const auto sums = detail::assemble(st, values, unit);
  Jet<cplx> total = unit * 0.0;
  for (const auto& c : sums.contribution) total += c;
  double scale = 0.0, odd = 0.0;
  for (int i = 0; i <= D; ++i) (i % 2 ? odd : scale) = std::max(i % 2 ? odd : scale, std::abs(total[i]));
  if (odd > 1e-9 * std::max(scale, 1e-300)) throw IllConditioned("reexpand_in_g: odd powers of lambda do not cancel");
  SeriesCoefficients<cplx> out;
  out.observable = pm.k() == 0 ? Observable::free_energy() : Observable::cumulant(pm.momenta);
  for (int m = 0; m <= orders; ++m) out.c.push_back(total[2 * m]);
  return out;
}

// ---------------------------------------------------------------------------
// Cardioid scan.

struct ScanCell {
  double modulus = 0.0;
  double gamma = 0.0;
  cplx g{};
  bool in_domain = false;    // |gamma| < pi/2
  bool in_cardioid = false;  // |g| < rho cos^2 gamma for the given rho
  bool evaluated = false;
  bool converged = false;
  bool resolved = false;
  double last_ratio = std::numeric_limits<double>::quiet_NaN();
  cplx value{};
  double error = 0.0;
  bool has_oracle = false;
  cplx oracle{};
  double oracle_gap = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

struct ScanReport {
  std::vector<ScanCell> cells;
  double rho = 1.0;
  /// min over angle rows of (largest modulus up to which every cell
  /// converged) / cos^2 gamma; 0 if some row converges nowhere.
  double empirical_rho = 0.0;
};

inline ScanReport cardioid_scan(const LveStructure& st, const std::vector<double>& moduli,
                                const std::vector<double>& angles, double rho, const LveOptions& opt = {},
                                bool with_oracle = true) {
  ScanReport rep;
  rep.rho = rho;
  for (double gamma : angles)
    for (double mod : moduli) {
      ScanCell cell;
      cell.modulus = mod;
      cell.gamma = gamma;
      cell.g = mod == 0.0 ? cplx{} : std::polar(mod, 2.0 * gamma);
      cell.in_domain = std::abs(gamma) < std::numbers::pi / 2 - 1e-12;
      if (!cell.in_domain) {
        cell.note = "out of domain: Arg g = pi";
        rep.cells.push_back(cell);
        continue;
      }
      const auto cp = CouplingPoint::from_polar(mod, gamma, rho);
      cell.in_cardioid = cp.in_cardioid();
      try {
        const auto r = cumulant_lve(st, cp, opt);
        cell.evaluated = true;
        cell.converged = r.converged;
        cell.resolved = r.resolved;
        cell.last_ratio = r.last_ratio;
        cell.value = r.value;
        cell.error = r.error;
      } catch (const Error& e) {
        cell.note = e.what();
      }
      if (with_oracle && cell.evaluated && cp.g.real() >= 0.0) {
        try {
          cell.oracle = cumulant_oracle(cp, st.slices(), st.momenta()).value;
          cell.has_oracle = true;
          cell.oracle_gap = std::abs(cell.value - cell.oracle);
        } catch (const Error& e) {
          cell.note = e.what();
        }
      }
      rep.cells.push_back(cell);
    }
  // empirical rho
  double best = std::numeric_limits<double>::infinity();
  bool any_row = false;
  for (double gamma : angles) {
    if (!(std::abs(gamma) < std::numbers::pi / 2 - 1e-12)) continue;
    any_row = true;
    std::vector<std::pair<double, bool>> row;
    for (const auto& c : rep.cells)
      if (c.gamma == gamma) row.push_back({c.modulus, c.converged});
    std::sort(row.begin(), row.end());
    double reach = 0.0;
    for (const auto& [m, ok] : row) {
      if (!ok) break;
      reach = m;
    }
    const double c2 = std::pow(std::cos(gamma), 2);
    best = std::min(best, reach / c2);
  }
  rep.empirical_rho = any_row ? best : 0.0;
  return rep;
}

inline ScanReport cardioid_scan(const SliceConfig& sc, const ExternalMomenta& pm, const std::vector<double>& moduli,
                                const std::vector<double>& angles, int n_max, double rho, const LveOptions& opt = {},
                                bool with_oracle = true) {
  return cardioid_scan(LveStructure(sc, pm, n_max), moduli, angles, rho, opt, with_oracle);
}

}  // namespace mlve
