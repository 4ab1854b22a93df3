#include "mlve/replica.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mlve;

namespace {
const SliceConfig kSc = SliceConfig::geometric(2, 1, 3);

WFactor interaction(int j) { return {0, VertexKind::Interaction, j, {}}; }
WFactor source(int p) { return {0, VertexKind::Source, 1, {p}}; }
}  // namespace

TEST(WFactor, TrivialValues) {
  const auto cp0 = CouplingPoint::from_g(0.0);
  EXPECT_EQ(w_factor_eval(interaction(2), 1.7, cp0, kSc), cplx{});
  const auto cp = CouplingPoint::from_g(std::polar(0.2, 0.4));
  EXPECT_NEAR(std::abs(w_factor_eval(source(4), 0.0, cp, kSc) - 0.25), 0.0, 1e-16);
  EXPECT_THROW(w_factor_eval(WFactor{0, VertexKind::Source, 1, {}}, 0.0, cp, kSc), std::invalid_argument);
}

TEST(WFactor, SmallCouplingLeadingOrder) {
  const auto cp = CouplingPoint::from_g(1e-6);
  const double sigma = 0.8;
  double expect = 0.0;
  for (int p : kSc.slice(1)) expect -= 1e-6 * sigma * sigma / (2.0 * p * p);
  const cplx f = w_factor_eval(interaction(2), sigma, cp, kSc);
  EXPECT_NEAR(f.real(), expect, 1e-3 * std::abs(expect));
}

TEST(WFactor, LowOrderDerivatives) {
  const auto cp = CouplingPoint::from_g(std::polar(0.3, -0.5));
  EXPECT_NEAR(std::abs(w_factor_derivative(interaction(1), 0.0, cp, kSc, 1)), 0.0, 1e-16);
  // G_p'(0) = i lambda / p^2
  EXPECT_NEAR(std::abs(w_factor_derivative(source(3), 0.0, cp, kSc, 1) - kI * cp.lambda / 9.0), 0.0, 1e-15);
  EXPECT_EQ(w_factor_derivative(source(3), 0.4, cp, kSc, 0), w_factor_eval(source(3), 0.4, cp, kSc));
}

TEST(WFactor, DerivativesMatchCentralDifferences) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const double gamma = 1.2 * U(rng);
    const auto cp = CouplingPoint::from_polar(0.4 * (0.1 + std::abs(U(rng))) * std::pow(std::cos(gamma), 2), gamma);
    ASSERT_TRUE(cp.in_cardioid());
    const double sigma = 2.5 * U(rng);
    const WFactor wf = trial % 2 ? interaction(1 + trial % 3) : source(1 + trial % 8);
    for (int m = 1; m <= 3; ++m) {
      const cplx exact = w_factor_derivative(wf, sigma, cp, kSc, m);
      const cplx fd = (w_factor_derivative(wf, sigma + h, cp, kSc, m - 1) -
                       w_factor_derivative(wf, sigma - h, cp, kSc, m - 1)) /
                      (2 * h);
      worst = std::max(worst, std::abs(exact - fd) / std::max(std::abs(exact), 1e-3));
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(WFactor, TaylorCoefficientsMatchJets) {
  const auto cp = CouplingPoint::from_g(std::polar(0.25, 0.3));
  for (const WFactor& wf : {interaction(3), source(2)}) {
    const auto c = w_factor_taylor(wf, kSc, 6);
    const auto jet = w_factor_jet(wf, 0.0, cp, kSc, 6);
    cplx lp = 1.0;
    for (int k = 0; k <= 6; ++k) {
      EXPECT_NEAR(std::abs(jet[k] - c[k] * lp), 0.0, 1e-14);
      lp *= cp.lambda;
    }
  }
}

TEST(Gaussian, ElementaryMoments) {
  GaussScheme scheme;
  using F = std::function<cplx(double)>;
  const F one = [](double) { return cplx{1.0}; };
  const F id = [](double s) { return cplx{s}; };
  const F sq = [](double s) { return cplx{s * s}; };
  Eigen::MatrixXd X1 = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_NEAR(std::abs(gaussian_expectation_generic(X1, std::vector<F>{one}, scheme, cplx{1.0}).value - 1.0), 0.0,
              1e-14);
  EXPECT_NEAR(std::abs(gaussian_expectation_generic(X1, std::vector<F>{sq}, scheme, cplx{1.0}).value - 1.0), 0.0,
              1e-13);
  Eigen::MatrixXd X2(2, 2);
  X2 << 1, 0.3, 0.3, 1;
  EXPECT_NEAR(std::abs(gaussian_expectation_generic(X2, std::vector<F>{id, id}, scheme, cplx{1.0}).value - 0.3), 0.0,
              1e-13);
  Eigen::MatrixXd Xd = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_NEAR(std::abs(gaussian_expectation_generic(Xd, std::vector<F>{id, id}, scheme, cplx{1.0}).value - 1.0), 0.0,
              1e-13);
  Eigen::MatrixXd Xbad(2, 2);
  Xbad << 1, 2, 2, 1;
  EXPECT_THROW(gaussian_expectation_generic(Xbad, std::vector<F>{id, id}, scheme, cplx{1.0}), NotPSD);
}

TEST(Gaussian, PolynomialExactness) {
  using F = std::function<cplx(double)>;
  GaussScheme scheme;
  scheme.nodes = 4;  // exact through degree 7 per axis
  const F s6 = [](double s) { return cplx{s * s * s * s * s * s}; };
  Eigen::MatrixXd X1 = Eigen::MatrixXd::Identity(1, 1) * 2.0;
  EXPECT_NEAR(gaussian_expectation_generic(X1, std::vector<F>{s6}, scheme, cplx{1.0}).value.real(), 15.0 * 8, 1e-11);
  // Isserlis: E[s1^2 s2^2 s3^2]
  Eigen::MatrixXd X(3, 3);
  X << 1, 0.5, 0.2, 0.5, 1, 0.4, 0.2, 0.4, 1;
  const F sq = [](double s) { return cplx{s * s}; };
  const double a = X(0, 1), b = X(0, 2), c = X(1, 2);
  const double isserlis = 1 + 2 * (a * a + b * b + c * c) + 8 * a * b * c;
  EXPECT_NEAR(gaussian_expectation_generic(X, std::vector<F>{sq, sq, sq}, scheme, cplx{1.0}).value.real(), isserlis,
              1e-12);
}

TEST(Gaussian, QuasiRandomFallback) {
  using F = std::function<cplx(double)>;
  GaussScheme scheme;
  scheme.max_tensor_rank = 1;
  const F id = [](double s) { return cplx{s}; };
  Eigen::MatrixXd X(2, 2);
  X << 1, 0.6, 0.6, 1;
  const auto est = gaussian_expectation_generic(X, std::vector<F>{id, id}, scheme, cplx{1.0});
  EXPECT_NEAR(est.value.real(), 0.6, 5e-3);
}

TEST(Gaussian, VertexFactorsAgainstOneDimensionalQuadrature) {
  const auto cp = CouplingPoint::from_g(std::polar(0.3, 0.5));
  std::vector<FactorSpec> specs = {{0, 0, interaction(1)}};
  const auto est = gaussian_expectation(Eigen::MatrixXd::Identity(1, 1), specs, cp, kSc, {64});
  // independent: Gauss-Hermite with many nodes on the raw factor
  const auto& gh = gauss_hermite(120);
  cplx ref{};
  for (std::size_t i = 0; i < gh.size(); ++i) ref += gh.weights[i] * w_factor_eval(interaction(1), gh.nodes[i], cp, kSc);
  EXPECT_NEAR(std::abs(est.value - ref), 0.0, 1e-11);
}

TEST(VertexFunction, AgreesWithTaylorArithmetic) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = 1.4 * U(rng);
    const auto cp = CouplingPoint::from_polar(std::abs(U(rng)) * std::pow(std::cos(gamma), 2), gamma);
    const WFactor wf = trial % 3 ? interaction(1 + trial % 3) : source(1 + trial % 8);
    const double sigma = 4.0 * U(rng);
    for (int m = 0; m <= 5; ++m) {
      const cplx a = VertexFunction(wf, cp, kSc, m)(sigma);
      const cplx b = w_factor_derivative(wf, sigma, cp, kSc, m);
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
    }
  }
  EXPECT_LT(worst, 1e-12);
}
