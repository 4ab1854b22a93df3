// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include "mlve/mlve.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace mlve;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

ExternalMomenta legs(std::vector<int> p) { return ExternalMomenta{std::move(p)}; }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// 1. sigma quadrature vs phi-space Monte Carlo, within 3 standard errors.
Outcome oracle_consistency() {
  constexpr double kSigmas = 3.0;
  constexpr std::size_t kSamples = 400000;
  double worst = 0.0;
  std::string where;
  for (int jmax : {1, 2, 3}) {
    const auto sc = SliceConfig::geometric(2, 1, jmax);
    const int N = sc.N();
    for (double g : {0.01, 0.05, 0.1}) {
      for (const auto& m : {std::vector<int>{}, std::vector<int>{1}, std::vector<int>{1, N}}) {
        const auto cp = CouplingPoint::from_g(g);
        const cplx q = cumulant_oracle(cp, sc, legs(m)).value;
        const auto mc = mc_cross_check(g, sc, legs(m), kSamples, 1000 + 17 * N + m.size());
        const double z = std::abs(mc.estimate - q) / mc.standard_error;
        if (z > worst) {
          worst = z;
          where = "N=" + std::to_string(N) + " g=" + fmt(g) + " k=" + std::to_string(m.size());
        }
      }
    }
  }
  return {worst < kSigmas, "worst |MC - quad| / stderr = " + fmt(worst) + " at " + where + " (tol 3)"};
}

// 2. g = 0: first cumulant 1/p, higher cumulants 0, for oracle, Wick series and tree expansion.
Outcome free_theory() {
  constexpr double kTol = 1e-10;
  const auto sc = SliceConfig::geometric(2, 1, 2);
  const auto cp = CouplingPoint::from_g(0.0);
  double worst = 0.0;
  for (int p : sc.modes()) {
    const double want = 1.0 / p;
    worst = std::max(worst, std::abs(cumulant_oracle(cp, sc, legs({p})).value - want));
    worst = std::max(worst, std::abs(static_cast<double>(wick_coefficients(sc, Observable::cumulant({p}), 0).c[0]) - want));
    worst = std::max(worst, std::abs(cumulant_lve(cp, sc, legs({p}), 3).value - want));
    worst = std::max(worst, std::abs(reexpand_in_g(sc, legs({p}), 1, 0).c[0] - want));
  }
  for (const auto& m : {std::vector<int>{1, 2}, std::vector<int>{2, 2}, std::vector<int>{1, 3, 4}}) {
    worst = std::max(worst, std::abs(cumulant_oracle(cp, sc, legs(m)).value));
    worst = std::max(worst, std::abs(static_cast<double>(wick_coefficients(sc, Observable::cumulant(m), 0).c[0])));
    worst = std::max(worst, std::abs(cumulant_lve(cp, sc, legs(m), 3).value));
  }
  return {worst < kTol, "worst deviation = " + fmt(worst) + " (tol 1e-10)"};
}

// 3. Forest formula residuals and counts.
Outcome bkar() {
  constexpr double kTol = 1e-8;
  using MD = MultiDual<double>;
  std::vector<std::pair<int, PairFunction>> suite = {
      {2, [](const std::vector<MD>& x) { return exp(x[0] * 0.8); }},
      {3, [](const std::vector<MD>& x) { return exp(x[0] + x[1] * 0.5 + x[2] * (-0.3)); }},
      {3, [](const std::vector<MD>& x) { return (x[0] * x[1] + x[2] + 1.0) * exp(x[1] * 0.4); }},
      {4, [](const std::vector<MD>& x) { return exp(x[0] * 0.3 + x[5] * (-0.7) + x[2] * 0.2) * (x[1] * x[4] + x[3] + 1.0); }},
      {4, [](const std::vector<MD>& x) { return exp((x[0] + x[1] + x[2] + x[3] + x[4] + x[5]) * 0.25); }},
  };
  double worst = 0.0;
  for (const auto& [n, f] : suite) worst = std::max(worst, bkar_exactness_check(f, n));
  bool counts = true;
  const long long expected[] = {1, 2, 7, 38};
  for (int n = 1; n <= 4; ++n) counts &= static_cast<long long>(enumerate_forests(n).size()) == expected[n - 1];
  for (int n = 1; n <= 6; ++n) {
    long long cayley = 1;
    for (int i = 0; i < n - 2; ++i) cayley *= n;
    counts &= static_cast<long long>(spanning_trees(n).size()) == cayley && cayley_count(n) == cayley;
  }
  return {worst < kTol && counts,
          "worst residual = " + fmt(worst) + " (tol 1e-8); counts " + (counts ? "exact" : "WRONG")};
}

// 4. Determinant evaluator vs exterior-algebra expansion, exact equality.
Outcome grassmann() {
  std::mt19937_64 rng(4242);
  int mismatches = 0, nonzero = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int fields = 1 + static_cast<int>(rng() % 4);
    Matrix<double> C(fields, fields);
    for (int i = 0; i < fields; ++i)
      for (int j = 0; j < fields; ++j) C(i, j) = static_cast<double>(static_cast<int>(rng() % 9) - 4);
    const int pairs = 1 + static_cast<int>(rng() % 4);
    GrassmannMonomial m;
    for (int r = 0; r < pairs; ++r) {
      m.push_back(chi_bar(static_cast<int>(rng() % fields)));
      m.push_back(chi(static_cast<int>(rng() % fields)));
    }
    std::shuffle(m.begin(), m.end(), rng);
    const double a = grassmann_gaussian(C, m), b = brute_force_oracle(C, m);
    mismatches += a != b;
    nonzero += a != 0.0;
  }
  return {mismatches == 0,
          std::to_string(mismatches) + " mismatches in 500 instances (" + std::to_string(nonzero) + " non-zero)"};
}

// 5. Taylor-mode derivatives of vertex factors vs central differences with two Richardson steps.
Outcome derivatives() {
  constexpr double kTol = 1e-6;
  const auto sc = SliceConfig::geometric(2, 1, 3);
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = 1.3 * U(rng);
    const auto cp = CouplingPoint::from_polar(0.9 * std::abs(U(rng)) * std::pow(std::cos(gamma), 2), gamma);
    const double sigma = 3.0 * U(rng);
    const WFactor wf = trial % 2 ? WFactor{0, VertexKind::Interaction, 1 + trial % 3, {}}
                                 : WFactor{0, VertexKind::Source, 1, {1 + trial % 8}};
    auto f = [&](double s) { return w_factor_eval(wf, s, cp, sc); };
    // value-only central stencils at h, h/2, h/4
    auto stencil = [&](int m, double h) -> cplx {
      switch (m) {
        case 1: return (f(sigma + h) - f(sigma - h)) / (2 * h);
        case 2: return (f(sigma + h) - 2.0 * f(sigma) + f(sigma - h)) / (h * h);
        default: return (f(sigma + 2 * h) - 2.0 * f(sigma + h) + 2.0 * f(sigma - h) - f(sigma - 2 * h)) / (2 * h * h * h);
      }
    };
    const double hs[] = {0, 2e-2, 4e-2, 4e-2};
    for (int m = 1; m <= 3; ++m) {
      const double h = hs[m];
      auto once = [&](double s) { return (4.0 * stencil(m, s / 2) - stencil(m, s)) / 3.0; };
      const cplx fd = (16.0 * once(h / 2) - once(h)) / 15.0;
      const cplx ad = w_factor_derivative(wf, sigma, cp, sc, m);
      const double scale = std::max(std::abs(ad), std::abs(f(sigma)) + 1e-3);
      worst = std::max(worst, std::abs(ad - fd) / scale);
    }
  }
  return {worst < kTol, "worst relative deviation = " + fmt(worst) + " (tol 1e-6)"};
}

// 6. Tree expansion vs oracle at g = 0.02, N = 4.
Outcome lve_vs_oracle() {
  const auto sc = SliceConfig::geometric(2, 1, 2);
  const auto cp = CouplingPoint::from_g(0.02);
  bool ok = true;
  std::ostringstream os;
  for (const auto& m : {std::vector<int>{}, std::vector<int>{1}, std::vector<int>{1, 4}}) {
    const auto r = cumulant_lve(cp, sc, legs(m), 4);
    const cplx o = cumulant_oracle(cp, sc, legs(m), {1e-12, 18}).value;
    double prev = std::numeric_limits<double>::infinity();
    bool mono = true;
    for (const auto& s : r.partial_sums) {
      const double gap = std::abs(s - o);
      mono &= gap < prev;
      prev = gap;
    }
    const bool below = prev < r.error;
    ok &= mono && below;
    os << "k=" << m.size() << ": gap " << fmt(prev) << " vs error " << fmt(r.error) << (mono ? "" : " NON-MONOTONE")
       << "; ";
  }
  return {ok, os.str()};
}

// 7. Re-expansion of the tree sum vs exact Wick coefficients.
Outcome series_bridge() {
  constexpr double kRel = 1e-5;
  double worst = 0.0;
  auto compare = [&](const SliceConfig& sc, const std::vector<int>& m) {
    const auto obs = m.empty() ? Observable::free_energy() : Observable::cumulant(m);
    const auto w = wick_coefficients(sc, obs, 2);
    const auto t = reexpand_in_g(sc, legs(m), 2 + static_cast<int>(m.size()), 2);
    for (int i = 0; i <= 2; ++i) {
      const double want = static_cast<double>(w.c[i]);
      worst = std::max(worst, std::abs(t.c[i] - want) / std::max(std::abs(want), 1e-300));
      if (want == 0.0) worst = std::max(worst, std::abs(t.c[i]) / 1e-12);
    }
  };
  compare(SliceConfig::single(1), {});
  const auto sc = SliceConfig::geometric(2, 1, 2);
  compare(sc, {});
  compare(sc, {1});
  compare(sc, {3});
  compare(sc, {1, 4});
  compare(sc, {2, 2});
  return {worst < kRel, "worst relative deviation = " + fmt(worst) + " (tol 1e-5)"};
}

// 8. Convergence flags of the scan, uniform in p1 and j_max; Arg g = pi never converges.
Outcome cardioid_uniformity() {
  const std::vector<double> moduli = {0.005, 0.02, 0.05, 0.1, 0.2, 0.4};
  const std::vector<double> angles = {-1.2, -0.6, 0.0, 0.6, 1.2, std::numbers::pi / 2};
  std::vector<std::vector<char>> flags;
  std::vector<std::string> names;
  bool edge_ok = true;
  double rho_min = std::numeric_limits<double>::infinity(), rho_max = 0.0;
  for (int jmax : {2, 3}) {
    const auto sc = SliceConfig::geometric(2, 1, jmax);
    const int N = sc.N();
    for (int p1 : {1, N / 2, N}) {
      const auto rep = cardioid_scan(sc, legs({p1}), moduli, angles, 4, 1.0, {}, false);
      std::vector<char> f;
      for (const auto& c : rep.cells) {
        f.push_back(c.converged);
        if (std::abs(c.gamma) >= std::numbers::pi / 2 - 1e-12) edge_ok &= !c.converged;
      }
      flags.push_back(f);
      names.push_back("jmax=" + std::to_string(jmax) + ",p1=" + std::to_string(p1));
      rho_min = std::min(rho_min, rep.empirical_rho);
      rho_max = std::max(rho_max, rep.empirical_rho);
    }
  }
  int differing = 0;
  for (std::size_t i = 0; i < flags[0].size(); ++i) {
    bool same = true;
    for (const auto& f : flags) same &= f[i] == flags[0][i];
    differing += !same;
  }
  int converged = 0;
  for (char c : flags[0]) converged += c;
  return {differing == 0 && edge_ok,
          std::to_string(differing) + " of " + std::to_string(flags[0].size()) + " cells differ across " +
              std::to_string(flags.size()) + " runs; " + std::to_string(converged) + " converged; gamma=pi/2 " +
              (edge_ok ? "never converges" : "CONVERGED") + "; empirical rho in [" + fmt(rho_min) + ", " +
              fmt(rho_max) + "]"};
}

// 9. Resolvent bound 2/cos(gamma) on 10 cardioid points, 1e5 samples each.
Outcome resolvent_bound() {
  double worst = 0.0;
  int points = 0;
  try {
    for (int i = 0; i < 10; ++i) {
      const double gamma = -1.35 + 2.7 * i / 9.0;
      const double modulus = (0.15 + 0.8 * ((i * 7) % 10) / 10.0) * std::pow(std::cos(gamma), 2);
      const auto cp = CouplingPoint::from_polar(modulus, gamma);
      const auto rep = check_resolvent_bound(cp, 8, 100000, 900 + i);
      worst = std::max(worst, rep.max_norm / rep.bound);
      ++points;
    }
  } catch (const BoundViolated& e) {
    return {false, e.what()};
  }
  return {points == 10, "worst |R^-1| / (2/cos gamma) = " + fmt(worst) + " over " + std::to_string(points) + " points"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 oracle consistency", oracle_consistency}, {"2 free theory", free_theory},
      {"3 forest formula", bkar},                   {"4 grassmann equivalence", grassmann},
      {"5 derivatives", derivatives},               {"6 tree expansion vs oracle", lve_vs_oracle},
      {"7 series bridge", series_bridge},           {"8 cardioid scan", cardioid_uniformity},
      {"9 resolvent bound", resolvent_bound},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs) << " s]\n" << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
