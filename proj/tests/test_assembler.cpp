#include "mlve/assembler.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mlve;

namespace {
const SliceConfig kSc = SliceConfig::geometric(2, 1, 2);

ExternalMomenta legs(std::vector<int> p) { return ExternalMomenta{std::move(p)}; }
}  // namespace

TEST(Terms, CountsForTwoVertices) {
  // one tree, Bosonic or Fermionic edge, two slices per interaction vertex
  const auto terms = enumerate_terms(kSc, legs({}), 2);
  int fermionic = 0;
  for (const auto& t : terms) fermionic += static_cast<int>(t.jungle.fermionic.size());
  EXPECT_EQ(terms.size(), 4u + 2u);
  EXPECT_EQ(fermionic, 2);
  for (const auto& t : terms) EXPECT_DOUBLE_EQ(t.weight, 0.5);
}

TEST(Terms, LegsLandOnDistinctSources) {
  for (const auto& t : enumerate_terms(kSc, legs({1, 3}), 3)) {
    ASSERT_EQ(t.assignment.leg_vertex.size(), 2u);
    EXPECT_NE(t.assignment.leg_vertex[0], t.assignment.leg_vertex[1]);
    EXPECT_EQ(t.assignment.color[t.assignment.leg_vertex[0]], 2);
    EXPECT_EQ(t.assignment.slice[t.assignment.leg_vertex[1]], 2);
    EXPECT_EQ(t.assignment.fermionic_color, t.assignment.color);
    for (const auto& e : t.jungle.fermionic) {
      EXPECT_EQ(t.assignment.color[e.a], 1);
      EXPECT_EQ(t.assignment.slice[e.a], t.assignment.slice[e.b]);
    }
  }
}

TEST(Structure, ClassesReproduceLabeledCount) {
  const LveStructure st(kSc, legs({1}), 3);
  long long admissible = 0;
  for (int n = 1; n <= 3; ++n) admissible += static_cast<long long>(enumerate_terms(kSc, legs({1}), n).size());
  EXPECT_EQ(st.admissible_terms(), admissible);
  long long in_classes = 0;
  for (const auto& c : st.classes()) in_classes += c.count;
  EXPECT_LE(in_classes, admissible);
  EXPECT_GT(in_classes, 0);
}

TEST(Fermions, SingleEdgeAndPauli) {
  // one Fermionic edge between two same-slice interaction vertices: int_0^1 (-2w) dw
  Jungle j{2, {}, {Edge{0, 1}}};
  EXPECT_NEAR(evaluate_fermion(j, {0, 0}), -1.0, 1e-14);
  // same slice inside one Bosonic block: the Grassmann integral vanishes
  Jungle b{2, {Edge{0, 1}}, {}};
  EXPECT_NEAR(evaluate_fermion(b, {1, 1}), 0.0, 1e-14);
  EXPECT_NEAR(evaluate_fermion(b, {0, 1}), 1.0, 1e-14);
}

TEST(Lve, FreeTheory) {
  const auto cp = CouplingPoint::from_g(0.0);
  for (int p : {1, 2, 3, 4}) {
    const auto r = cumulant_lve(cp, kSc, legs({p}), 3);
    EXPECT_NEAR(std::abs(r.value - 1.0 / p), 0.0, 1e-14);
  }
  EXPECT_EQ(cumulant_lve(cp, kSc, legs({}), 3).value, cplx{});
  EXPECT_NEAR(std::abs(cumulant_lve(cp, kSc, legs({1, 2}), 3).value), 0.0, 1e-15);
}

TEST(Lve, SecondCumulantStartsAtTwoVertices) {
  const auto r = cumulant_lve(CouplingPoint::from_g(0.05), kSc, legs({1, 1}), 2);
  EXPECT_EQ(r.n_min, 2);
  EXPECT_EQ(r.partial_sums.size(), 1u);
}

TEST(Lve, ApproachesOracle) {
  const auto cp = CouplingPoint::from_g(0.02);
  for (const auto& m : {std::vector<int>{}, std::vector<int>{1}, std::vector<int>{2, 3}}) {
    const auto r = cumulant_lve(cp, kSc, legs(m), 3);
    const cplx o = cumulant_oracle(cp, kSc, legs(m), {1e-12, 18}).value;
    double last = std::numeric_limits<double>::infinity();
    for (const auto& s : r.partial_sums) {
      const double gap = std::abs(s - o);
      EXPECT_LT(gap, last);
      last = gap;
    }
    EXPECT_LT(last, r.error + 1e-14);
  }
}

TEST(Lve, Symmetries) {
  const auto cp = CouplingPoint::from_g(std::polar(0.03, 0.6));
  const auto a = cumulant_lve(cp, kSc, legs({1, 4}), 3).value;
  const auto b = cumulant_lve(cp, kSc, legs({4, 1}), 3).value;
  EXPECT_NEAR(std::abs(a - b), 0.0, 1e-13 * std::abs(a));
  const auto c = cumulant_lve(CouplingPoint::from_g(std::conj(cp.g)), kSc, legs({1, 4}), 3).value;
  EXPECT_NEAR(std::abs(c - std::conj(a)), 0.0, 1e-13 * std::abs(a));
}

TEST(Lve, ConvergenceFlag) {
  CumulantResult r;
  finalize_result(r, {cplx{1.0}, cplx{0.1}, cplx{0.01}}, {0, 0, 0});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.last_ratio, 0.1, 1e-12);
  finalize_result(r, {cplx{1.0}, cplx{0.1}, cplx{0.2}}, {0, 0, 0});
  EXPECT_FALSE(r.converged);
  r = {};
  finalize_result(r, {cplx{1.0}, cplx{0.1}}, {0, 0});
  EXPECT_FALSE(r.converged);
  r = {};
  finalize_result(r, {cplx{1.0}, cplx{}, cplx{}}, {0, 0, 0});
  EXPECT_TRUE(r.converged);
  // increments below their quadrature error decide nothing
  r = {};
  finalize_result(r, {cplx{1.0}, cplx{0.1}, cplx{0.01}}, {0, 0, 0.02});
  EXPECT_FALSE(r.resolved);
  EXPECT_FALSE(r.converged);
}

TEST(Reexpand, MatchesWickSeries) {
  for (const auto& m : {std::vector<int>{}, std::vector<int>{2}, std::vector<int>{1, 3}}) {
    const auto obs = m.empty() ? Observable::free_energy() : Observable::cumulant(m);
    const auto wick = wick_coefficients(kSc, obs, 2);
    const auto lve = reexpand_in_g(kSc, legs(m), 2 + static_cast<int>(m.size()), 2);
    ASSERT_EQ(lve.c.size(), 3u);
    for (int i = 0; i <= 2; ++i) {
      const double w = static_cast<double>(wick.c[i]);
      EXPECT_NEAR(lve.c[i].real(), w, 1e-10 * std::max(1.0, std::abs(w))) << "order " << i;
      EXPECT_NEAR(lve.c[i].imag(), 0.0, 1e-12);
    }
  }
}

TEST(Reexpand, RejectsShortTruncation) {
  EXPECT_THROW(reexpand_in_g(kSc, legs({1}), 2, 2), std::invalid_argument);
}

TEST(Scan, DomainAndRows) {
  const LveStructure st(kSc, legs({1}), 3);
  const auto rep = cardioid_scan(st, {0.01, 0.02}, {0.0, std::numbers::pi / 2}, 1.0, {}, false);
  ASSERT_EQ(rep.cells.size(), 4u);
  for (const auto& c : rep.cells) {
    if (c.gamma == 0.0) {
      EXPECT_TRUE(c.evaluated);
      EXPECT_TRUE(c.in_cardioid);
    } else {
      EXPECT_FALSE(c.in_domain);
      EXPECT_FALSE(c.evaluated);
      EXPECT_FALSE(c.converged);
    }
  }
  EXPECT_GE(rep.empirical_rho, 0.02);
}
