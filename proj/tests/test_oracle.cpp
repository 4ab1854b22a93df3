#include "mlve/oracle.hpp"

#include <gtest/gtest.h>

using namespace mlve;

namespace {

cplx log_z_with_source(const CouplingPoint& cp, const SliceConfig& sc, int p, double t) {
  SourceVector J;
  J.entries[p] = {cplx{t}, cplx{1.0}};
  OracleOptions opt;
  opt.relative_tolerance = 1e-12;
  return std::log(partition_function_with_sources(cp, sc, J, opt).value);
}

}  // namespace

TEST(Oracle, FreeTheory) {
  const auto sc = SliceConfig::geometric(2, 1, 3);
  const auto cp = CouplingPoint::from_g(0.0);
  EXPECT_NEAR(std::abs(partition_function(cp, sc).value - 1.0), 0.0, 1e-12);
  for (int p : {1, 3, 8}) EXPECT_NEAR(std::abs(moment(cp, sc, {p}).value - 1.0 / p), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(moment(cp, sc, {2, 5}).value - 0.1), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(cumulant_oracle(cp, sc, {{2, 5}}).value), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(cumulant_oracle(cp, sc, {{1, 1, 4}}).value), 0.0, 1e-12);
}

TEST(Oracle, FirstOrderSingleMode) {
  // log Z = -g/2 + O(g^2) for N = 1
  const auto sc = SliceConfig::single(1);
  for (double g : {1e-3, 2e-3, 4e-3}) {
    const cplx lz = cumulant_oracle(CouplingPoint::from_g(g), sc, {}).value;
    EXPECT_NEAR(lz.real(), -g / 2, 10 * g * g);
    EXPECT_NEAR(lz.imag(), 0.0, 1e-14);
  }
}

TEST(Oracle, ConjugationSymmetry) {
  const auto sc = SliceConfig::geometric(2, 1, 2);
  const cplx g = std::polar(0.2, 0.6);
  const cplx a = partition_function(CouplingPoint::from_g(g), sc).value;
  const cplx b = partition_function(CouplingPoint::from_g(std::conj(g)), sc).value;
  EXPECT_NEAR(std::abs(a - std::conj(b)), 0.0, 1e-12);
}

TEST(Oracle, CumulantPermutationSymmetry) {
  const auto sc = SliceConfig::geometric(2, 1, 2);
  const auto cp = CouplingPoint::from_g(std::polar(0.1, 0.3));
  const cplx a = cumulant_oracle(cp, sc, {{1, 3, 4}}).value;
  const cplx b = cumulant_oracle(cp, sc, {{4, 1, 3}}).value;
  EXPECT_NEAR(std::abs(a - b), 0.0, 1e-12);
}

TEST(Oracle, CumulantsMatchSourceFiniteDifferences) {
  const auto sc = SliceConfig::geometric(2, 1, 3);
  const auto cp = CouplingPoint::from_g(0.05);
  // k = 1 at p = 3: first derivative in t
  {
    auto d = [&](double h) {
      return (log_z_with_source(cp, sc, 3, h) - log_z_with_source(cp, sc, 3, -h)) / (2 * h);
    };
    const cplx rich = (4.0 * d(5e-4) - d(1e-3)) / 3.0;
    EXPECT_NEAR(std::abs(rich - cumulant_oracle(cp, sc, {{3}}).value), 0.0, 1e-8);
  }
  // k = 2 at p1 = p2 = 1: second derivative in t
  {
    const cplx f0 = log_z_with_source(cp, sc, 1, 0.0);
    auto d = [&](double h) {
      return (log_z_with_source(cp, sc, 1, h) - 2.0 * f0 + log_z_with_source(cp, sc, 1, -h)) / (h * h);
    };
    const cplx rich = (4.0 * d(5e-4) - d(1e-3)) / 3.0;
    EXPECT_NEAR(std::abs(rich - cumulant_oracle(cp, sc, {{1, 1}}).value), 0.0, 1e-5);
  }
}

TEST(MonteCarlo, FreeTheoryAndZeroVariance) {
  const auto sc = SliceConfig::geometric(2, 1, 2);
  const auto r = mc_cross_check(0.0, sc, {{2}}, 200000, 7);
  EXPECT_LT(std::abs(r.estimate.real() - 0.5), 3 * r.standard_error);
  EXPECT_EQ(r.weight_variance, 0.0);
}

TEST(MonteCarlo, AgreesWithQuadrature) {
  const auto sc = SliceConfig::geometric(2, 1, 3);
  for (const ExternalMomenta pm : {ExternalMomenta{}, ExternalMomenta{{1}}, ExternalMomenta{{1, 2}}}) {
    const auto mc = mc_cross_check(0.05, sc, pm, 400000, 11);
    const cplx q = cumulant_oracle(CouplingPoint::from_g(0.05), sc, pm).value;
    EXPECT_LT(std::abs(mc.estimate.real() - q.real()), 3 * mc.standard_error) << "k = " << pm.k();
  }
}
