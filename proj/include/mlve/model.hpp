#pragma once

// Constants and elementary functions of the quartic U(N) vector model in its
// intermediate-field form: coupling geometry, momentum slices, the resolvent
// 1 - i u, the subtracted logarithm u + log(1 - u), and the per-slice
// interaction V_j and source term K_j.

#include "mlve/errors.hpp"
#include "mlve/taylor.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <tuple>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mlve {

using cplx = std::complex<double>;
inline constexpr cplx kI{0.0, 1.0};

/// (lambda, gamma) with lambda the principal square root of g and gamma = Arg(g)/2.
/// Throws BranchCut on the negative real axis, where Arg(g) = pi.
inline std::pair<cplx, double> sqrt_coupling(cplx g) {
  if (g.imag() == 0.0 && g.real() < 0.0)
    throw BranchCut("sqrt_coupling: g lies on the negative real axis");
  return {std::sqrt(g), 0.5 * std::arg(g)};
}

/// Strict membership in {|g| < rho cos^2(Arg(g)/2)}.
inline bool in_cardioid(cplx g, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("in_cardioid: rho must be positive");
  // cos^2(Arg(g)/2) = (1 + Re g / |g|) / 2, so no trigonometry is needed and
  // boundary points such as g = 0.5 i with rho = 1 are decided exactly.
  const double m = std::abs(g);
  if (m == 0.0) return true;
  return 2.0 * m * m < rho * (m + g.real());
}

struct CouplingPoint {
  cplx g{0.0, 0.0};
  cplx lambda{0.0, 0.0};
  double gamma = 0.0;
  double rho = 1.0;

  static CouplingPoint from_g(cplx g, double rho = 1.0) {
    CouplingPoint cp;
    cp.g = g;
    std::tie(cp.lambda, cp.gamma) = sqrt_coupling(g);
    cp.rho = rho;
    return cp;
  }
  /// g = modulus * exp(2 i gamma).
  static CouplingPoint from_polar(double modulus, double gamma, double rho = 1.0) {
    if (modulus == 0.0) {
      // g = 0 has no argument; keep the requested gamma
      CouplingPoint cp = from_g(0.0, rho);
      cp.gamma = gamma;
      return cp;
    }
    return from_g(std::polar(modulus, 2.0 * gamma), rho);
  }
  bool in_cardioid() const { return mlve::in_cardioid(g, rho); }
};

inline double harmonic_sum(int n) {
  if (n < 1) throw std::invalid_argument("harmonic_sum: N must be >= 1");
  double s = 0.0;
  for (int p = n; p >= 1; --p) s += 1.0 / p;  // small terms first
  return s;
}

/// Momentum slices I_j. For the geometric family I_1 = [1, M] and
/// I_j = (M^{j-1}, M^j] for j >= 2, so the slices j_min..j_max tile
/// (M^{j_min-1}, M^{j_max}] (all of [1..N] when j_min = 1).
class SliceConfig {
 public:
  static SliceConfig geometric(int M, int j_min, int j_max) {
    if (M < 2) throw std::invalid_argument("SliceConfig: M must be > 1");
    if (j_min < 1 || j_min > j_max) throw std::invalid_argument("SliceConfig: need 1 <= j_min <= j_max");
    if (j_max * std::log2(static_cast<double>(M)) > 24)
      throw std::invalid_argument("SliceConfig: N = M^j_max too large");
    SliceConfig sc;
    sc.M_ = M;
    sc.j_min_ = j_min;
    sc.j_max_ = j_max;
    sc.N_ = ipow(M, j_max);
    for (int j = j_min; j <= j_max; ++j) {
      const int lo = (j == 1) ? 1 : ipow(M, j - 1) + 1;
      const int hi = ipow(M, j);
      std::vector<int> slice;
      for (int p = lo; p <= hi; ++p) slice.push_back(p);
      sc.slices_.push_back(std::move(slice));
    }
    sc.finish();
    return sc;
  }

  /// One slice holding every mode 1..N (used for N that is not a power of M).
  static SliceConfig single(int N) {
    if (N < 1) throw std::invalid_argument("SliceConfig: N must be >= 1");
    SliceConfig sc;
    sc.M_ = 0;
    sc.j_min_ = sc.j_max_ = 1;
    sc.N_ = N;
    std::vector<int> slice;
    for (int p = 1; p <= N; ++p) slice.push_back(p);
    sc.slices_.push_back(std::move(slice));
    sc.finish();
    return sc;
  }

  int M() const { return M_; }
  int j_min() const { return j_min_; }
  int j_max() const { return j_max_; }
  int N() const { return N_; }
  int slice_count() const { return static_cast<int>(slices_.size()); }
  /// Slice by position 0..slice_count()-1 (position s holds I_{j_min + s}).
  std::span<const int> slice(int s) const { return slices_.at(s); }
  const std::vector<int>& modes() const { return modes_; }
  /// Harmonic number L_N = sum_{p=1}^N 1/p.
  double L_N() const { return L_N_; }
  /// Wick-ordering constant of the restricted theory: sum of 1/p over included modes.
  double wick_constant() const { return wick_constant_; }

  bool contains(int p) const { return position_.count(p) != 0; }
  /// Slice position of momentum p; throws if p is not an included mode.
  int slice_position(int p) const {
    auto it = position_.find(p);
    if (it == position_.end()) {
      std::ostringstream os;
      os << "momentum " << p << " is not in any slice";
      throw std::out_of_range(os.str());
    }
    return it->second;
  }

 private:
  static int ipow(int b, int e) {
    int r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
  }
  void finish() {
    modes_.clear();
    position_.clear();
    wick_constant_ = 0.0;
    for (int s = 0; s < slice_count(); ++s)
      for (int p : slices_[s]) {
        modes_.push_back(p);
        position_[p] = s;
      }
    for (auto it = modes_.rbegin(); it != modes_.rend(); ++it) wick_constant_ += 1.0 / *it;
    L_N_ = harmonic_sum(N_);
  }

  int M_ = 2, j_min_ = 1, j_max_ = 1, N_ = 1;
  double L_N_ = 1.0, wick_constant_ = 1.0;
  std::vector<std::vector<int>> slices_;
  std::vector<int> modes_;
  std::map<int, int> position_;
};

/// Sources J_bar_p, J_p. Only the bilinear J_bar_p * J_p enters the model.
struct SourceVector {
  std::map<int, std::pair<cplx, cplx>> entries;

  cplx bilinear(int p) const {
    auto it = entries.find(p);
    return it == entries.end() ? cplx{} : it->second.first * it->second.second;
  }
};

struct ExternalMomenta {
  std::vector<int> momenta;
  int k() const { return static_cast<int>(momenta.size()); }
};

inline constexpr int kMaxCumulantOrder = 4;

inline void validate(const ExternalMomenta& pm, const SliceConfig& sc, int k_max = kMaxCumulantOrder) {
  if (pm.k() > k_max) throw std::invalid_argument("cumulant order exceeds k_max");
  for (int p : pm.momenta)
    if (!sc.contains(p)) throw std::invalid_argument("external momentum outside the included slices");
}

inline cplx resolvent(cplx u) { return 1.0 - kI * u; }

inline cplx inverse_resolvent(cplx u, double eps = 1e-14) {
  const cplx r = resolvent(u);
  if (std::abs(r) < eps) throw PoleHit("inverse_resolvent: 1 - i u vanishes");
  return 1.0 / r;
}

/// u + log(1 - u), principal branch, series below |u| = 0.1.
inline cplx log2_interaction(cplx u) {
  const cplx w = 1.0 - u;
  if (w.imag() == 0.0 && w.real() <= 0.0) throw BranchCut("log2_interaction: 1 - u is a nonpositive real");
  if (std::norm(u) < 0.01) {
    // -(u^2/2 + ... + u^17/17); the remainder is below 1e-18 |u|^2
    cplx h = 1.0 / 17.0;
    for (int k = 16; k >= 2; --k) h = h * u + 1.0 / k;
    return -h * u * u;
  }
  return u + std::log(w);
}

/// Taylor jet of x -> x + log(1 - x) at x0.
inline Jet<cplx> log2_jet(cplx x0, int degree) {
  Jet<cplx> j(log2_interaction(x0), degree);
  const cplx w = 1.0 - x0;
  if (degree >= 1) j[1] = -x0 / w;
  cplx winv_k = 1.0 / w;
  for (int k = 2; k <= degree; ++k) {
    winv_k /= w;
    j[k] = -winv_k / static_cast<double>(k);
  }
  return j;
}

/// Dressed propagator G_p(sigma) = (1/p) (1 - i lambda sigma / p)^{-1}.
inline cplx dressed_propagator(int p, cplx sigma, cplx lambda) {
  return inverse_resolvent(lambda * sigma / static_cast<double>(p)) / static_cast<double>(p);
}

/// V_j(sigma) = sum_{p in I_j} log2(i lambda sigma / p).
inline cplx interaction_V(cplx sigma, const CouplingPoint& cp, std::span<const int> slice) {
  cplx v{};
  for (int p : slice) {
    try {
      v += log2_interaction(kI * cp.lambda * sigma / static_cast<double>(p));
    } catch (const BranchCut&) {
      std::ostringstream os;
      os << "V_j: branch cut hit at p = " << p;
      throw BranchCut(os.str());
    }
  }
  return v;
}

/// K_j(sigma, J) = -sum_{p in I_j} J_bar_p J_p G_p(sigma), so that exp(-K_j) is
/// the Gaussian source factor and d^2/dJbar_p dJ_p log Z |_{g=0,J=0} = 1/p.
inline cplx source_K(cplx sigma, const CouplingPoint& cp, std::span<const int> slice, const SourceVector& J) {
  cplx k{};
  for (int p : slice) {
    const cplx t = J.bilinear(p);
    if (t == cplx{}) continue;
    k -= t * dressed_propagator(p, sigma, cp.lambda);
  }
  return k;
}

struct ResolventBoundReport {
  double max_norm = 0.0;
  double bound = 0.0;        // 2 / cos(gamma)
  double sharp_bound = 0.0;  // 1 / cos(gamma)
  double witness_sigma = 0.0;
  int witness_p = 0;
  std::size_t samples = 0;
  bool within_sharp_bound = true;
};

/// Samples sigma ~ N(0,1) and p uniform in [1..N] and records the largest
/// |(1 - i lambda sigma / p)^{-1}|. Throws BoundViolated past 2/cos(gamma).
inline ResolventBoundReport check_resolvent_bound(const CouplingPoint& cp, int N, std::size_t samples,
                                                  std::uint64_t seed) {
  if (!cp.in_cardioid()) throw std::invalid_argument("check_resolvent_bound: g outside the cardioid");
  if (N < 1) throw std::invalid_argument("check_resolvent_bound: N must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> mode(1, N);
  ResolventBoundReport rep;
  rep.bound = 2.0 / std::cos(cp.gamma);
  rep.sharp_bound = 1.0 / std::cos(cp.gamma);
  rep.samples = samples;
  for (std::size_t i = 0; i < samples; ++i) {
    const double sigma = normal(rng);
    const int p = mode(rng);
    const double v = std::abs(inverse_resolvent(cp.lambda * sigma / static_cast<double>(p)));
    if (v > rep.max_norm) {
      rep.max_norm = v;
      rep.witness_sigma = sigma;
      rep.witness_p = p;
    }
  }
  rep.within_sharp_bound = rep.max_norm <= rep.sharp_bound * (1.0 + 1e-12);
  if (rep.max_norm > rep.bound) {
    std::ostringstream os;
    os << "resolvent bound violated: |R^-1| = " << rep.max_norm << " > " << rep.bound
       << " at sigma = " << rep.witness_sigma << ", p = " << rep.witness_p;
    throw BoundViolated(os.str());
  }
  return rep;
}

}  // namespace mlve
