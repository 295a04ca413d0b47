#include "polyest/estimator.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "polyest/design.hpp"
#include "polyest/errors.hpp"

namespace polyest {
namespace {

MatrixXd Gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return MatrixXd::NullaryExpr(rows, cols, [&] { return nd(rng); });
}

GaussianL1Problem SmallGaussian(int n, double sigma, std::uint64_t seed,
                                double delta = 0.01) {
  std::mt19937_64 rng(seed);
  const double s = n / 64.0;
  return GaussianL1Problem{Gaussian(n, n, rng) / std::sqrt(n),
                           Gaussian(n, n, rng) / std::sqrt(n),
                           10 * s,
                           8.5 * s,
                           7 * s,
                           GaussianNorm(sigma, delta / (2 * n), n)};
}

ContrastMatrix Columns(const MatrixXd& H) {
  ContrastMatrix c;
  c.H = H;
  c.weights = VectorXd::Ones(H.cols());
  c.provenance.assign(H.cols(), ColumnSide::kEllitope);
  return c;
}

SignalSet BallBoxL1(int n) {
  return SignalSet{Ellitope::BallBox(n, 1.0, 0.5), PolytopeImage::L1Ball(n, 1.0),
                   {}};
}

TEST(ThetaNorm, Examples) {
  const VectorXd v = (VectorXd(2) << 3, -4).finished();
  EXPECT_DOUBLE_EQ(ThetaNorm(v, 1.0), 7.0);
  EXPECT_DOUBLE_EQ(ThetaNorm(v, 2.0), 5.0);
  EXPECT_NEAR(ThetaNorm(v, 4.0 / 3.0),
              std::pow(std::pow(3.0, 4.0 / 3) + std::pow(4.0, 4.0 / 3), 0.75),
              1e-12);
  EXPECT_THROW(ThetaNorm(v, 0.5), std::invalid_argument);
}

TEST(Estimate, NoiselessRecoversSignal) {
  std::mt19937_64 rng(1);
  const int n = 4;
  const SignalSet X = BallBoxL1(n);
  const MatrixXd A = Gaussian(n, n, rng);
  const MatrixXd B = Gaussian(3, n, rng);
  const VectorXd x0 = (VectorXd(n) << 0.3, -0.2, 0.1, 0.25).finished();
  ASSERT_TRUE(X.Contains(x0));
  const EstimateResult r =
      Estimate(A * x0, Columns(MatrixXd::Identity(n, n)), X, A, B);
  EXPECT_LE(r.residual, 1e-7);
  EXPECT_LE((r.x_hat - x0).norm(), 1e-6);
  EXPECT_LE((r.w_hat - B * x0).norm(), 1e-6);
}

TEST(Estimate, RejectsEmptyContrast) {
  const SignalSet X = BallBoxL1(3);
  const MatrixXd A = MatrixXd::Identity(3, 3);
  EXPECT_THROW(Estimate(VectorXd::Zero(3), ContrastMatrix::Empty(3, 0.0), X, A, A),
               std::invalid_argument);
}

TEST(Estimate, FeasibleAndNoWorseThanTruth) {
  std::mt19937_64 rng(2);
  const int n = 5;
  const SignalSet X = BallBoxL1(n);
  const SignalSampler sampler(X);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd A = Gaussian(n + 1, n, rng);
    const ContrastMatrix H = Columns(Gaussian(n + 1, 3, rng));
    const VectorXd x0 = sampler.Sample(rng);
    const VectorXd omega = A * x0 + 0.3 * Gaussian(n + 1, 1, rng).col(0);
    const EstimateResult r = Estimate(omega, H, X, A, MatrixXd::Identity(n, n));
    EXPECT_TRUE(X.Contains(r.x_hat, 1e-6));
    EXPECT_LE(r.residual,
              (H.H.transpose() * (omega - A * x0)).cwiseAbs().maxCoeff() + 1e-7);
  }
}

TEST(LeastSquaresBaseline, Examples) {
  std::mt19937_64 rng(3);
  const MatrixXd A = Gaussian(4, 4, rng);
  const VectorXd x = Gaussian(4, 1, rng).col(0);
  EXPECT_LE((LeastSquaresBaseline(A * x, A) - x).norm(), 1e-10);
  const VectorXd w = Gaussian(4, 1, rng).col(0);
  EXPECT_EQ(LeastSquaresBaseline(w, MatrixXd::Identity(4, 4)), w);
}

TEST(LeastSquaresBaseline, SingularUsesMinimumNorm) {
  std::mt19937_64 rng(4);
  // Rank 2 in R^{4x4}.
  const MatrixXd A = Gaussian(4, 2, rng) * Gaussian(2, 4, rng);
  const VectorXd omega = Gaussian(4, 1, rng).col(0);
  const VectorXd x = LeastSquaresBaseline(omega, A);
  // Normal equations hold and x lies in the row space of A.
  EXPECT_LE((A.transpose() * (A * x - omega)).norm(), 1e-10);
  const MatrixXd P = A.transpose() *
                     (A * A.transpose()).completeOrthogonalDecomposition()
                         .pseudoInverse() * A;
  EXPECT_LE((P * x - x).norm(), 1e-9);
}

TEST(PBoundOracle, ZeroForm) {
  std::mt19937_64 rng(5);
  const SignalSet X = BallBoxL1(3);
  const PBoundOracleResult r =
      PBoundOracle(MatrixXd::Zero(3, 3), X, OracleSet::kSymmetrized,
                   ContrastMatrix::Empty(3, 0.0), MatrixXd::Identity(3, 3), rng, 20);
  EXPECT_EQ(r.value, 0.0);
}

TEST(PBoundOracle, KnownMaximum) {
  // Over ||x||_1 <= 1, ||x||_inf <= 1/2: ||x||_2^2 <= ||x||_inf ||x||_1 = 1/2,
  // attained at (1/2, 1/2, 0, 0).
  std::mt19937_64 rng(6);
  const int n = 4;
  const SignalSet X = BallBoxL1(n);
  const MatrixXd I = MatrixXd::Identity(n, n);
  const PBoundOracleResult r = PBoundOracle(I, X, OracleSet::kSymmetrized,
                                            ContrastMatrix::Empty(n, 0.0), I, rng);
  EXPECT_LE(r.value, 0.5 + 1e-9);
  EXPECT_GE(r.value, 0.5 - 1e-3);
  // The ellitope alone allows ||x||_2 = 1.
  const PBoundOracleResult e =
      PBoundOracle(I, X, OracleSet::kEllitope, ContrastMatrix::Empty(n, 0.0), I, rng);
  EXPECT_LE(e.value, 1.0 + 1e-9);
  EXPECT_GE(e.value, 1.0 - 1e-3);
}

TEST(PBoundOracle, HugeContrastShrinksValue) {
  std::mt19937_64 rng(7);
  const int n = 3;
  const SignalSet X = BallBoxL1(n);
  const MatrixXd I = MatrixXd::Identity(n, n);
  const double free = PBoundOracle(I, X, OracleSet::kSymmetrized,
                                   ContrastMatrix::Empty(n, 0.0), I, rng, 50)
                          .value;
  const double tight = PBoundOracle(I, X, OracleSet::kSymmetrized,
                                    Columns(1e3 * I), I, rng, 50)
                           .value;
  EXPECT_LE(tight, free);
  EXPECT_LE(tight, 3e-6 + 1e-12);
}

TEST(PBoundOracle, RejectsLargeDimension) {
  std::mt19937_64 rng(8);
  const SignalSet X = BallBoxL1(9);
  const MatrixXd I = MatrixXd::Identity(9, 9);
  EXPECT_THROW(PBoundOracle(I, X, OracleSet::kEllitope, ContrastMatrix::Empty(9, 0.0),
                            I, rng),
               std::invalid_argument);
}

TEST(PBoundOracle, NeverExceedsDesignBounds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GaussianL1Problem gp = SmallGaussian(4, 0.05, 100 + seed);
    const DesignProblem p = gp.ToDesignProblem();
    const DesignSolution sol = SolveMaster(p);
    std::mt19937_64 rng(seed);
    const ContrastMatrix H = AssembleContrast(sol, p.norm, rng);
    const ContrastMatrix H1 = H.Select(ColumnSide::kEllitope);
    const ContrastMatrix H2 = H.Select(ColumnSide::kPolytope);
    const double u = PBoundOracle(sol.U, p.X, OracleSet::kEllitope, H1, p.A, rng,
                                  60)
                         .value;
    EXPECT_LE(u, sol.phi_gamma + sol.rho + 1e-6);
    const double s = PBoundOracle(sol.S, p.X, OracleSet::kSymmetrized, H2, p.A,
                                  rng, 60)
                         .value;
    EXPECT_LE(s, sol.varsigma + 1e-6);
    const double loss =
        PBoundOracle(p.B.transpose() * p.B, p.X, OracleSet::kSymmetrized, H,
                     p.A, rng, 60)
            .value;
    EXPECT_LE(loss, sol.radicand() + 1e-6);
  }
}

TEST(SignalSampler, SamplesLieInTheSet) {
  std::mt19937_64 rng(9);
  const SignalSet X = BallBoxL1(4);
  const SignalSampler sampler(X);
  for (int t = 0; t < 50; ++t) EXPECT_TRUE(X.Contains(sampler.Sample(rng), 1e-9));
}

TEST(SignalSampler, FailsAfterBoundedRejections) {
  // Vertices +-5 e_i against a box of half-width 0.01: acceptance is tiny.
  const SignalSet X{Ellitope::BallBox(3, 10.0, 0.01),
                    PolytopeImage::L1Ball(3, 5.0), {}};
  const SignalSampler sampler(X, 3);
  std::mt19937_64 rng(10);
  EXPECT_THROW(sampler.Sample(rng), SamplerError);
}

TEST(TrialRng, DeterministicAndDistinct) {
  std::mt19937_64 a = TrialRng(42, 3), b = TrialRng(42, 3), c = TrialRng(42, 4);
  const auto va = a(), vb = b(), vc = c();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

TEST(EmpiricalQuantile, OrderStatisticRule) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  // k = ceil(0.99 * 100) = 99.
  EXPECT_EQ(EmpiricalQuantile(v, 0.01), 99.0);
  // k = ceil(0.9 * 10) = 9.
  EXPECT_EQ(EmpiricalQuantile({10, 9, 8, 7, 6, 5, 4, 3, 2, 1}, 0.1), 9.0);
  // k = ceil(0.75 * 3) = 3.
  EXPECT_EQ(EmpiricalQuantile({1, 2, 3}, 0.25), 3.0);
  EXPECT_EQ(EmpiricalQuantile({5}, 0.5), 5.0);
}

TEST(SimulateEstimators, NoiselessInjectiveDesignHasZeroError) {
  std::mt19937_64 rng(11);
  const int n = 4;
  const SignalSampler sampler(BallBoxL1(n));
  const MatrixXd A = Gaussian(n, n, rng);
  const ObservationModel obs = ObservationModel::Gaussian(A, 0.0);
  const ContrastMatrix H = Columns(MatrixXd::Identity(n, n));
  const MatrixXd B = MatrixXd::Identity(n, n);
  const std::vector<SimulatedEstimator> est = {
      {"H",
       [&](const VectorXd& w) { return Estimate(w, H, sampler.set(), A, B).x_hat; },
       0.0, &H},
      {"LS", [&](const VectorXd& w) { return LeastSquaresBaseline(w, A); }, 0.0,
       nullptr}};
  const auto reports = SimulateEstimators(sampler, obs, B, est, 10, 2.0, 0.1, 5);
  ASSERT_EQ(reports.size(), 2u);
  for (const RiskReport& r : reports) {
    ASSERT_EQ(r.trials(), 10);
    for (double e : r.errors) EXPECT_LE(e, 1e-6);
  }
  for (bool event : reports[0].noise_event) EXPECT_TRUE(event);
}

TEST(MonteCarloRisk, CoverageOnSmallInstance) {
  const GaussianL1Problem gp = SmallGaussian(8, 0.01, 21, 0.01);
  DesignProblem p = gp.ToDesignProblem();
  const DesignSolution sol = SolveMaster(p);
  std::mt19937_64 rng(22);
  const ContrastMatrix H = AssembleContrast(sol, p.norm, rng);
  const double bound = 2 * std::sqrt(sol.radicand());
  const SignalSampler sampler(p.X);
  const ObservationModel obs = ObservationModel::Gaussian(p.A, 0.01);
  const RiskReport r =
      MonteCarloRisk(sampler, obs, p.B, H, bound, 100, 2.0, 0.01, 23);
  EXPECT_TRUE(r.coverage_ok()) << r.exceed_rate();
  EXPECT_EQ(r.implication_failures(), 0);
  EXPECT_LE(r.quantile, bound);
  // Recompute the exceed count from the raw errors.
  int exceed = 0;
  for (double e : r.errors) exceed += e > bound;
  EXPECT_EQ(exceed, r.exceed);
}

TEST(RiskReport, CoverageArithmetic) {
  RiskReport r;
  r.epsilon = 0.1;
  r.bound = 1.0;
  r.errors = {0.5, 2.0, 0.5, 0.5};
  r.noise_event = {true, true, false, true};
  r.exceed = 1;
  EXPECT_DOUBLE_EQ(r.exceed_rate(), 0.25);
  EXPECT_DOUBLE_EQ(r.standard_error(), std::sqrt(0.09 / 4));
  EXPECT_TRUE(r.coverage_ok());
  EXPECT_EQ(r.implication_failures(), 1);
}

}  // namespace
}  // namespace polyest
