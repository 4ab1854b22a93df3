#pragma once

// Labeled forests, spanning trees and two-level jungles on vertices 0..n-1,
// the interpolated covariances X(w) and Y(w), and cubature over the edge
// parameters w in [0,1]^E.

#include "mlve/errors.hpp"
#include "mlve/quadrature.hpp"
#include "mlve/taylor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <compare>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

namespace mlve {

struct Edge {
  int a = 0;
  int b = 0;
  auto operator<=>(const Edge&) const = default;
};

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

inline constexpr int kForestCap = 7;
inline constexpr int kJungleCap = 6;

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(int x, int y) {
    x = find(x);
    y = find(y);
    if (x == y) return false;
    parent_[std::max(x, y)] = std::min(x, y);
    return true;
  }

 private:
  std::vector<int> parent_;
};

struct Forest {
  int n = 0;
  std::vector<Edge> edges;
  bool spanning() const { return static_cast<int>(edges.size()) + 1 == n; }
};

/// Connected components of a forest, blocks listed by smallest vertex.
struct BlockPartition {
  std::vector<int> block_of;
  std::vector<std::vector<int>> blocks;

  int size() const { return static_cast<int>(blocks.size()); }

  static BlockPartition from_edges(int n, const std::vector<Edge>& edges) {
    DisjointSets ds(n);
    for (const auto& e : edges) ds.unite(e.a, e.b);
    BlockPartition bp;
    bp.block_of.assign(n, -1);
    for (int v = 0; v < n; ++v) {
      const int r = ds.find(v);
      if (bp.block_of[r] < 0) {
        bp.block_of[r] = bp.size();
        bp.blocks.emplace_back();
      }
      bp.block_of[v] = bp.block_of[r];
      bp.blocks[bp.block_of[v]].push_back(v);
    }
    return bp;
  }
};

struct Jungle {
  int n = 0;
  std::vector<Edge> bosonic;
  std::vector<Edge> fermionic;

  BlockPartition blocks() const { return BlockPartition::from_edges(n, bosonic); }
  bool is_spanning_tree() const {
    if (static_cast<int>(bosonic.size() + fermionic.size()) + 1 != n) return false;
    DisjointSets ds(n);
    for (const auto& e : bosonic)
      if (!ds.unite(e.a, e.b)) return false;
    for (const auto& e : fermionic)
      if (!ds.unite(e.a, e.b)) return false;
    return true;
  }
};

namespace detail {

inline std::vector<Edge> complete_graph_edges(int n) {
  std::vector<Edge> all;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) all.push_back({a, b});
  return all;
}

inline void check_cap(int n, int cap, const char* what) {
  if (n < 0) throw std::invalid_argument(std::string(what) + ": negative vertex count");
  if (n > cap) {
    std::ostringstream os;
    os << what << ": n = " << n << " exceeds the cap " << cap;
    throw CapExceeded(os.str());
  }
}

}  // namespace detail

/// Every forest on n labeled vertices, once each, in lexicographic edge-subset order.
inline std::vector<Forest> enumerate_forests(int n, int cap = kForestCap) {
  detail::check_cap(n, cap, "enumerate_forests");
  const auto all = detail::complete_graph_edges(n);
  std::vector<Forest> out;
  std::vector<Edge> chosen;
  std::function<void(std::size_t, const std::vector<int>&)> rec = [&](std::size_t i, const std::vector<int>& comp) {
    if (i == all.size()) {
      out.push_back({n, chosen});
      return;
    }
    const Edge e = all[i];
    if (comp[e.a] != comp[e.b]) {
      std::vector<int> next = comp;
      const int from = comp[e.b], to = comp[e.a];
      for (auto& c : next)
        if (c == from) c = to;
      chosen.push_back(e);
      rec(i + 1, next);
      chosen.pop_back();
    }
    rec(i + 1, comp);
  };
  std::vector<int> comp(n);
  std::iota(comp.begin(), comp.end(), 0);
  rec(0, comp);
  return out;
}

/// n^(n-2) labeled trees via Pruefer decoding (n = 1 gives the empty tree).
inline std::vector<Forest> spanning_trees(int n, int cap = kForestCap) {
  detail::check_cap(n, cap, "spanning_trees");
  std::vector<Forest> out;
  if (n == 0) return out;
  if (n == 1) return {Forest{1, {}}};
  if (n == 2) return {Forest{2, {{0, 1}}}};
  std::vector<int> seq(n - 2, 0);
  while (true) {
    std::vector<int> degree(n, 1);
    for (int s : seq) ++degree[s];
    Forest f{n, {}};
    for (int s : seq) {
      int leaf = 0;
      while (degree[leaf] != 1) ++leaf;
      f.edges.push_back(make_edge(leaf, s));
      --degree[leaf];
      --degree[s];
    }
    int u = -1, v = -1;
    for (int x = 0; x < n; ++x)
      if (degree[x] == 1) (u < 0 ? u : v) = x;
    f.edges.push_back(make_edge(u, v));
    std::sort(f.edges.begin(), f.edges.end());
    out.push_back(std::move(f));
    int pos = n - 3;
    while (pos >= 0 && ++seq[pos] == n) seq[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

inline long long cayley_count(int n) {
  if (n <= 2) return n >= 1 ? 1 : 0;
  long long r = 1;
  for (int i = 0; i < n - 2; ++i) r *= n;
  return r;
}

/// Ordered pairs (bosonic, fermionic) of disjoint edge sets whose union is a
/// forest (spanning tree if requested). In a forest every Fermionic edge
/// automatically joins distinct Bosonic blocks.
inline std::vector<Jungle> enumerate_jungles(int n, bool spanning, int cap = kJungleCap) {
  detail::check_cap(n, cap, "enumerate_jungles");
  std::vector<Jungle> out;
  const auto base = spanning ? spanning_trees(n, cap) : enumerate_forests(n, cap);
  for (const auto& f : base) {
    const std::size_t e = f.edges.size();
    for (std::uint32_t mask = 0; mask < (1u << e); ++mask) {
      Jungle j{n, {}, {}};
      for (std::size_t i = 0; i < e; ++i) (mask & (1u << i) ? j.fermionic : j.bosonic).push_back(f.edges[i]);
      out.push_back(std::move(j));
    }
  }
  return out;
}

/// X_ab = min of w along the forest path a..b, 1 on the diagonal, 0 if disconnected.
inline Eigen::MatrixXd x_matrix(int n, const std::vector<Edge>& edges, std::span<const double> w) {
  if (w.size() != edges.size()) throw std::invalid_argument("x_matrix: one w per edge required");
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    adj[edges[i].a].push_back({edges[i].b, w[i]});
    adj[edges[i].b].push_back({edges[i].a, w[i]});
  }
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    std::vector<double> best(n, -1.0);
    best[s] = 1.0;
    stack.assign(1, s);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (auto [u, wu] : adj[v])
        if (best[u] < 0.0) {
          best[u] = std::min(best[v], wu);
          stack.push_back(u);
        }
    }
    for (int t = 0; t < n; ++t) X(s, t) = std::max(best[t], 0.0);
  }
  return X;
}

/// Y_BB' over the Bosonic blocks: min of the Fermionic w along the block
/// path, 1 on the diagonal, 0 if the blocks are not connected.
inline Eigen::MatrixXd y_matrix(const Jungle& j, std::span<const double> w_fermionic, const BlockPartition& bp) {
  std::vector<Edge> block_edges;
  for (const auto& e : j.fermionic) {
    const int ba = bp.block_of[e.a], bb = bp.block_of[e.b];
    if (ba == bb) throw std::invalid_argument("y_matrix: Fermionic edge inside a Bosonic block");
    block_edges.push_back({ba, bb});
  }
  return x_matrix(bp.size(), block_edges, w_fermionic);
}

inline Eigen::MatrixXd y_matrix(const Jungle& j, std::span<const double> w_fermionic) {
  return y_matrix(j, w_fermionic, j.blocks());
}

// ---------------------------------------------------------------------------
// Cubature on [0,1]^E.

enum class CubatureKind { TensorGauss, OrderedSimplex, QuasiRandom };

struct CubatureScheme {
  CubatureKind kind = CubatureKind::TensorGauss;
  int nodes = 8;
  std::size_t points = std::size_t{1} << 13;

  /// 8-node tensor Gauss-Legendre up to three edges, Halton points beyond.
  static CubatureScheme defaults_for(int edges) {
    CubatureScheme s;
    if (edges >= 4) s.kind = CubatureKind::QuasiRandom;
    return s;
  }
};

/// Flattened point set: point i is points[i*dims .. i*dims+dims).
struct CubatureRule {
  int dims = 0;
  std::vector<double> points;
  std::vector<double> weights;
  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * static_cast<std::size_t>(dims), static_cast<std::size_t>(dims)};
  }
};

inline CubatureRule tensor_rule(int dims, int q) {
  const auto& gl = gauss_legendre01(q);
  CubatureRule r;
  r.dims = dims;
  std::size_t total = 1;
  for (int d = 0; d < dims; ++d) total *= static_cast<std::size_t>(q);
  std::vector<int> idx(dims, 0);
  for (std::size_t t = 0; t < total; ++t) {
    double wt = 1.0;
    for (int d = 0; d < dims; ++d) {
      r.points.push_back(gl.nodes[idx[d]]);
      wt *= gl.weights[idx[d]];
    }
    r.weights.push_back(wt);
    for (int d = dims - 1; d >= 0 && ++idx[d] == q; --d) idx[d] = 0;
  }
  return r;
}

/// Splits the cube into the E! regions w_pi(1) > ... > w_pi(E) and maps each
/// with w_pi(i) = u_1 ... u_i (Jacobian prod_i u_i^(E-i)). Functions of
/// minima of the w are smooth inside every region, so Gauss rules converge
/// at their polynomial rate.
inline CubatureRule ordered_simplex_rule(int dims, int q) {
  const auto& gl = gauss_legendre01(q);
  CubatureRule r;
  r.dims = dims;
  std::vector<int> perm(dims);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t total = 1;
  for (int d = 0; d < dims; ++d) total *= static_cast<std::size_t>(q);
  std::vector<double> w(dims);
  do {
    std::vector<int> idx(dims, 0);
    for (std::size_t t = 0; t < total; ++t) {
      double prod = 1.0, wt = 1.0;
      for (int i = 0; i < dims; ++i) {
        const double u = gl.nodes[idx[i]];
        prod *= u;
        w[perm[i]] = prod;
        wt *= gl.weights[idx[i]] * std::pow(u, dims - 1 - i);
      }
      r.points.insert(r.points.end(), w.begin(), w.end());
      r.weights.push_back(wt);
      for (int d = dims - 1; d >= 0 && ++idx[d] == q; --d) idx[d] = 0;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return r;
}

inline CubatureRule quasi_random_rule(int dims, std::size_t points) {
  CubatureRule r;
  r.dims = dims;
  for (std::size_t i = 1; i <= points; ++i) {
    const auto x = halton_point(i, dims);
    r.points.insert(r.points.end(), x.begin(), x.end());
    r.weights.push_back(1.0 / static_cast<double>(points));
  }
  return r;
}

inline const CubatureRule& cubature_rule(int dims, const CubatureScheme& s) {
  static std::map<std::tuple<int, int, int, std::size_t>, std::unique_ptr<CubatureRule>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_tuple(dims, static_cast<int>(s.kind), s.nodes, s.points);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;
  CubatureRule r;
  switch (s.kind) {
    case CubatureKind::TensorGauss: r = tensor_rule(dims, s.nodes); break;
    case CubatureKind::OrderedSimplex: r = ordered_simplex_rule(dims, s.nodes); break;
    case CubatureKind::QuasiRandom: r = quasi_random_rule(dims, s.points); break;
  }
  return *cache.emplace(key, std::make_unique<CubatureRule>(std::move(r))).first->second;
}

template <class T>
struct Estimate {
  T value{};
  double error = 0.0;
};

inline double magnitude(double x) { return std::abs(x); }
inline double magnitude(std::complex<double> x) { return std::abs(x); }
template <class T>
double magnitude(const Jet<T>& j) {
  double m = 0.0;
  for (int k = 0; k <= j.degree(); ++k) m = std::max(m, magnitude(j[k]));
  return m;
}

/// Integrates f(w) over [0,1]^edges. The error is the difference against a
/// coarser rule (half the nodes, or half the Halton points).
template <class F>
auto w_integrate(int edges, F&& f, const CubatureScheme& scheme)
    -> Estimate<std::decay_t<decltype(f(std::span<const double>{}))>> {
  using T = std::decay_t<decltype(f(std::span<const double>{}))>;
  if (edges == 0) return {f(std::span<const double>{}), 0.0};
  auto run = [&](const CubatureRule& rule, std::size_t limit) {
    T acc{};
    double wsum = 0.0;
    for (std::size_t i = 0; i < limit; ++i) {
      acc += f(rule.point(i)) * rule.weights[i];
      wsum += rule.weights[i];
    }
    return acc * (1.0 / wsum);
  };
  const auto& rule = cubature_rule(edges, scheme);
  Estimate<T> est;
  est.value = run(rule, rule.size());
  if (scheme.kind == CubatureKind::QuasiRandom) {
    est.error = magnitude(est.value - run(rule, rule.size() / 2));
  } else {
    CubatureScheme coarse = scheme;
    coarse.nodes = std::max(1, scheme.nodes / 2);
    const auto& cr = cubature_rule(edges, coarse);
    est.error = magnitude(est.value - run(cr, cr.size()));
  }
  if (!std::isfinite(est.error)) throw CubatureNoConverge("w_integrate: non-finite integrand");
  return est;
}

// ---------------------------------------------------------------------------
// Exactness of the forest formula.

/// f takes the pair couplings x_ab (a < b, lexicographic) as multi-dual numbers.
using PairFunction = std::function<MultiDual<double>(const std::vector<MultiDual<double>>&)>;

inline int pair_index(int n, int a, int b) {
  if (a > b) std::swap(a, b);
  return a * n - a * (a + 1) / 2 + (b - a - 1);
}

/// |sum_F int dw prod_{l in F} d/dx_l f(X^F(w)) - f(1, ..., 1)|.
inline double bkar_exactness_check(const PairFunction& f, int n, int nodes = 12) {
  if (n < 1 || n > 4) throw std::invalid_argument("bkar_exactness_check: 1 <= n <= 4");
  const int pairs = n * (n - 1) / 2;
  const auto all = detail::complete_graph_edges(n);
  double sum = 0.0, comp = 0.0;
  for (const auto& forest : enumerate_forests(n)) {
    const int E = static_cast<int>(forest.edges.size());
    const std::uint32_t full = (1u << E) - 1;
    CubatureScheme scheme{CubatureKind::OrderedSimplex, nodes, 0};
    auto integrand = [&](std::span<const double> w) {
      const Eigen::MatrixXd X = x_matrix(n, forest.edges, w);
      std::vector<MultiDual<double>> x;
      x.reserve(pairs);
      for (const auto& e : all) x.emplace_back(E, X(e.a, e.b));
      for (int l = 0; l < E; ++l)
        x[pair_index(n, forest.edges[l].a, forest.edges[l].b)].coefficient(1u << l) = 1.0;
      return f(x).coefficient(full);
    };
    const double term = w_integrate(E, integrand, scheme).value;
    // Kahan-Babuska
    const double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  const std::vector<MultiDual<double>> ones(pairs, MultiDual<double>(0, 1.0));
  return std::abs(sum + comp - f(ones).value());
}

}  // namespace mlve
