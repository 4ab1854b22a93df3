#pragma once

// Ground truth for the model at finite N: the one-dimensional sigma
// representation
//   Z(g, N, J) = int dnu(sigma) exp(-sum_p log2(i lambda sigma / p)) prod_p exp(Jbar_p J_p G_p(sigma))
// integrated by adaptive Gauss-Kronrod, plus a direct Monte Carlo over the
// complex field phi for real g >= 0.

#include "mlve/errors.hpp"
#include "mlve/model.hpp"
#include "mlve/partitions.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <map>
#include <random>
#include <sstream>
#include <vector>

namespace mlve {

struct OracleValue {
  cplx value{};
  double error = 0.0;
};

struct OracleOptions {
  double relative_tolerance = 1e-10;
  int max_depth = 18;
};

namespace detail {

inline double sigma_cutoff(const CouplingPoint& cp, const SliceConfig& sc) {
  return 12.0 + 4.0 * std::max(1.0, std::abs(cp.lambda) * sc.L_N());
}

/// int dnu(sigma) f(sigma) over [-S, S].
template <class F>
OracleValue integrate_gaussian(F&& f, double S, const OracleOptions& opt) {
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto integrand = [&](double s) -> cplx { return norm * std::exp(-0.5 * s * s) * f(s); };
  double err = 0.0, l1 = 0.0;
  const cplx v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -S, S, opt.max_depth, opt.relative_tolerance * 1e-3, &err, &l1);
  if (!(err <= opt.relative_tolerance * std::max(std::abs(v), 1e-300) + 1e-15 * l1) || !std::isfinite(v.real()) ||
      !std::isfinite(v.imag())) {
    std::ostringstream os;
    os << "sigma quadrature did not reach tolerance (error " << err << ", value " << v << ")";
    throw QuadratureNoConverge(os.str());
  }
  return {v, err};
}

inline cplx bare_weight(double sigma, const CouplingPoint& cp, const SliceConfig& sc) {
  cplx v{};
  for (int s = 0; s < sc.slice_count(); ++s) v += interaction_V(sigma, cp, sc.slice(s));
  return std::exp(-v);
}

}  // namespace detail

inline OracleValue partition_function(const CouplingPoint& cp, const SliceConfig& sc, const OracleOptions& opt = {}) {
  return detail::integrate_gaussian([&](double s) { return detail::bare_weight(s, cp, sc); },
                                    detail::sigma_cutoff(cp, sc), opt);
}

inline OracleValue partition_function_with_sources(const CouplingPoint& cp, const SliceConfig& sc,
                                                   const SourceVector& J, const OracleOptions& opt = {}) {
  return detail::integrate_gaussian(
      [&](double s) {
        cplx k{};
        for (int t = 0; t < sc.slice_count(); ++t) k += source_K(s, cp, sc.slice(t), J);
        return detail::bare_weight(s, cp, sc) * std::exp(-k);
      },
      detail::sigma_cutoff(cp, sc), opt);
}

/// <prod_{p in insertions} G_p(sigma)> in the interacting sigma measure, normalized by Z.
inline OracleValue moment(const CouplingPoint& cp, const SliceConfig& sc, const std::vector<int>& insertions,
                          const OracleOptions& opt = {}) {
  if (insertions.empty()) return {cplx{1.0, 0.0}, 0.0};
  for (int p : insertions)
    if (!sc.contains(p)) throw std::invalid_argument("moment: momentum outside the included slices");
  const OracleValue z = partition_function(cp, sc, opt);
  const OracleValue num = detail::integrate_gaussian(
      [&](double s) {
        cplx w = detail::bare_weight(s, cp, sc);
        for (int p : insertions) w *= dressed_propagator(p, s, cp.lambda);
        return w;
      },
      detail::sigma_cutoff(cp, sc), opt);
  const cplx m = num.value / z.value;
  return {m, std::abs(m) * (num.error / std::abs(num.value) + z.error / std::abs(z.value))};
}

/// Joint cumulant of G_{p_1}..G_{p_k}; equals the mixed derivative of log Z in
/// the source bilinears t_q = Jbar_{p_q} J_{p_q}. k = 0 gives log Z.
inline OracleValue cumulant_oracle(const CouplingPoint& cp, const SliceConfig& sc, const ExternalMomenta& pm,
                                   const OracleOptions& opt = {}) {
  validate(pm, sc);
  const int k = pm.k();
  if (k == 0) {
    const OracleValue z = partition_function(cp, sc, opt);
    return {std::log(z.value), z.error / std::abs(z.value)};
  }
  const std::uint32_t full = (1u << k) - 1;
  std::vector<OracleValue> m(full + 1);
  m[0] = {1.0, 0.0};
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    std::vector<int> ins;
    for (int q = 0; q < k; ++q)
      if (mask & (1u << q)) ins.push_back(pm.momenta[q]);
    m[mask] = moment(cp, sc, ins, opt);
  }
  OracleValue out;
  for (const auto& pi : set_partitions(k)) {
    cplx prod = static_cast<double>(moebius_coefficient(pi.size()));
    for (auto b : pi) prod *= m[b].value;
    double err = 0.0;
    for (auto b : pi) {
      double e = m[b].error * std::abs(static_cast<double>(moebius_coefficient(pi.size())));
      for (auto c : pi)
        if (c != b) e *= std::abs(m[c].value);
      err += e;
    }
    out.value += prod;
    out.error += err;
  }
  return out;
}

struct MonteCarloResult {
  cplx estimate{};
  double standard_error = 0.0;
  double weight_variance = 0.0;
  std::size_t samples = 0;
};

/// Direct estimate over phi in C^N with phi_p ~ complex normal of variance 1/p
/// and weight exp(-(g/2)(sum_p |phi_p|^2 - L)^2). Moments of a multiset of
/// momenta use prod_p |phi_p|^{2m} / m!, matching the sigma-representation.
/// The standard error comes from batch means.
inline MonteCarloResult mc_cross_check(double g, const SliceConfig& sc, const ExternalMomenta& pm,
                                       std::size_t samples, std::uint64_t seed, int batches = 50) {
  if (!(g >= 0.0)) throw std::invalid_argument("mc_cross_check: requires real g >= 0");
  if (batches < 2 || samples < static_cast<std::size_t>(batches))
    throw std::invalid_argument("mc_cross_check: need at least two non-empty batches");
  validate(pm, sc);
  const int k = pm.k();
  const std::uint32_t full = k == 0 ? 0u : (1u << k) - 1;
  const std::vector<int>& modes = sc.modes();
  const double L = sc.wick_constant();

  // per-subset multiplicity tables
  std::vector<std::vector<std::pair<int, int>>> subset_powers(full + 1);
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    std::map<int, int> mult;
    for (int q = 0; q < k; ++q)
      if (mask & (1u << q)) ++mult[pm.momenta[q]];
    for (auto [p, m] : mult) subset_powers[mask].push_back({p, m});
  }
  std::map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < modes.size(); ++i) index_of[modes[i]] = i;

  const std::size_t per_batch = samples / batches;
  std::vector<double> batch_est;
  std::vector<double> pooled_sums(full + 1, 0.0);
  double pooled_w = 0.0, pooled_w2 = 0.0;
  std::vector<double> x(modes.size());

  auto estimate_from = [&](double w_sum, const std::vector<double>& sums, std::size_t n) {
    if (k == 0) return std::log(w_sum / static_cast<double>(n));
    std::vector<double> m(full + 1, 1.0);
    for (std::uint32_t mask = 1; mask <= full; ++mask) m[mask] = sums[mask] / w_sum;
    return cumulant_from_moments(k, m);
  };

  for (int b = 0; b < batches; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    double w_sum = 0.0;
    std::vector<double> sums(full + 1, 0.0);
    for (std::size_t i = 0; i < per_batch; ++i) {
      double total = 0.0;
      for (std::size_t t = 0; t < modes.size(); ++t) {
        const double re = normal(rng), im = normal(rng);
        x[t] = (re * re + im * im) / (2.0 * modes[t]);
        total += x[t];
      }
      const double d = total - L;
      const double w = std::exp(-0.5 * g * d * d);
      w_sum += w;
      pooled_w2 += w * w;
      for (std::uint32_t mask = 1; mask <= full; ++mask) {
        double mon = w;
        for (auto [p, m] : subset_powers[mask]) {
          const double xp = x[index_of[p]];
          double pw = 1.0, fact = 1.0;
          for (int r = 1; r <= m; ++r) {
            pw *= xp;
            fact *= r;
          }
          mon *= pw / fact;
        }
        sums[mask] += mon;
      }
    }
    batch_est.push_back(estimate_from(w_sum, sums, per_batch));
    pooled_w += w_sum;
    for (std::uint32_t mask = 1; mask <= full; ++mask) pooled_sums[mask] += sums[mask];
  }
  MonteCarloResult res;
  res.samples = per_batch * batches;
  res.estimate = estimate_from(pooled_w, pooled_sums, res.samples);
  double mean = 0.0;
  for (double e : batch_est) mean += e;
  mean /= batches;
  double var = 0.0;
  for (double e : batch_est) var += (e - mean) * (e - mean);
  var /= (batches - 1);
  res.standard_error = std::sqrt(var / batches);
  const double wm = pooled_w / res.samples;
  res.weight_variance = std::max(0.0, pooled_w2 / res.samples - wm * wm);
  return res;
}

}  // namespace mlve
