#include "polyest/design.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "polyest/errors.hpp"

namespace polyest {
namespace {

MatrixXd Gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return MatrixXd::NullaryExpr(rows, cols, [&] { return nd(rng); });
}

// Scaled-down analogue of the l1 / ball-box instance: radii proportional to n.
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

MixtureModel SmallMixture(int n, int N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<VectorXd> a;
  std::vector<MatrixXd> Theta;
  for (int i = 0; i < n; ++i) {
    a.push_back(Gaussian(n, 1, rng).col(0).normalized());
    const MatrixXd F = Gaussian(n, n, rng);
    MatrixXd T = F * F.transpose();
    Theta.push_back(T / MaxEigenvalue(T));
  }
  return MixtureModel(a, Theta, N);
}

DesignProblem MixtureProblem(const MixtureModel& model, double delta) {
  const int n = model.n();
  SignalSet X{Ellitope::BallBox(n, 1.0, 0.5), PolytopeImage::L1Ball(n, 1.0),
              {ExtraConstraint::kProbabilitySimplex}};
  return DesignProblem{X, model.A(), MatrixXd::Identity(n, n),
                       MixtureNorm(model, delta), 1.0};
}

DesignOptions Mode(DesignMode mode) {
  DesignOptions o;
  o.mode = mode;
  return o;
}

// Random point of ellitope ∩ l1-ball for the ball-box / l1 instances.
VectorXd RandomInSets(const GaussianL1Problem& p, std::mt19937_64& rng,
                      bool ellitope_only) {
  const int n = static_cast<int>(p.A.cols());
  const VectorXd u = Gaussian(n, 1, rng).col(0);
  double gauge = std::max(u.norm() / p.rho2, u.cwiseAbs().maxCoeff() / p.rho_inf);
  if (!ellitope_only) gauge = std::max(gauge, u.cwiseAbs().sum() / p.rho1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return u * (std::sqrt(unif(rng)) / gauge);
}

// Pulls x onto {||H^T A x||_inf <= 1}, touching the boundary of the sets or
// of the constraint.
VectorXd ScaleToContrast(const VectorXd& x, const MatrixXd& H,
                         const MatrixXd& A) {
  if (H.cols() == 0) return x;
  const double v = (H.transpose() * A * x).cwiseAbs().maxCoeff();
  return v > 1.0 ? VectorXd(x / v) : x;
}

TEST(SolveMaster, ZeroBHasZeroOptimum) {
  GaussianL1Problem gp = SmallGaussian(4, 0.1, 1);
  gp.B.setZero();
  const DesignProblem p = gp.ToDesignProblem();
  for (DesignMode mode : {DesignMode::kFull, DesignMode::kEllitopeOnly,
                          DesignMode::kPolytopeOnly}) {
    const DesignSolution sol = SolveMaster(p, Mode(mode));
    EXPECT_NEAR(sol.objective, 0.0, 1e-6) << ToString(mode);
  }
  // With theta = 1, U = S = 0 and zeta = 0 satisfy the loss LMI.
  DesignProblem p1 = p;
  p1.theta = 1.0;
  const DesignSolution sol = SolveMaster(p1);
  EXPECT_NEAR(sol.objective, 0.0, 1e-6);
}

TEST(SolveMaster, RejectsUnsupportedTheta) {
  GaussianL1Problem gp = SmallGaussian(3, 0.1, 2);
  DesignProblem p = gp.ToDesignProblem();
  p.theta = 1.5;
  EXPECT_THROW(SolveMaster(p), UnsupportedError);
  p.theta = 2.0;
  p.B = MatrixXd::Ones(2, 5);
  EXPECT_THROW(SolveMaster(p), std::invalid_argument);
}

TEST(SolveMaster, RejectsOracleDomains) {
  GaussianL1Problem gp = SmallGaussian(3, 0.1, 2);
  DesignProblem p = gp.ToDesignProblem();
  p.X.ellitope = Ellitope(MatrixXd::Identity(3, 3), {MatrixXd::Identity(3, 3)},
                          MonotoneSet::ConicOracle(1, "cone"));
  EXPECT_THROW(SolveMaster(p), UnsupportedError);
}

TEST(SolveMaster, FullDominatesSpecializedDesigns) {
  for (std::uint64_t seed : {3u, 4u}) {
    const DesignProblem p = SmallGaussian(8, 0.01, seed).ToDesignProblem();
    const double full = SolveMaster(p).objective;
    const double e = SolveMaster(p, Mode(DesignMode::kEllitopeOnly)).objective;
    const double pp = SolveMaster(p, Mode(DesignMode::kPolytopeOnly)).objective;
    EXPECT_LE(full, std::min(e, pp) + 1e-6);
    EXPECT_GE(full, 0.0);
  }
}

TEST(SolveMaster, ScaledExperimentOneInstance) {
  const DesignProblem p = SmallGaussian(16, 0.01, 5).ToDesignProblem();
  const DesignSolution full = SolveMaster(p);
  const DesignSolution e = SolveMaster(p, Mode(DesignMode::kEllitopeOnly));
  const DesignSolution pp = SolveMaster(p, Mode(DesignMode::kPolytopeOnly));
  EXPECT_LE(full.objective, std::min(e.objective, pp.objective) + 1e-6);
  EXPECT_TRUE(VerifyDesign(p, full).ok());
  EXPECT_DOUBLE_EQ(pp.rho, 0.0);
  EXPECT_DOUBLE_EQ(e.varsigma, 0.0);
}

TEST(SolveMaster, AgreesWithGaussianSpecialization) {
  const GaussianL1Problem gp = SmallGaussian(6, 0.05, 6);
  const DesignProblem p = gp.ToDesignProblem();
  for (DesignMode mode : {DesignMode::kFull, DesignMode::kEllitopeOnly,
                          DesignMode::kPolytopeOnly}) {
    const DesignSolution general = SolveMaster(p, Mode(mode));
    const DesignSolution special = SolveMasterGaussian(gp, Mode(mode));
    EXPECT_NEAR(general.objective, special.objective,
                1e-6 * std::max(1.0, general.objective))
        << ToString(mode);
    // The specialized solution also passes the general-form verification.
    EXPECT_TRUE(VerifyDesign(p, special).ok()) << VerifyDesign(p, special).Summary();
  }
}

TEST(SolveMasterGaussian, RejectsGeneralNoise) {
  GaussianL1Problem gp = SmallGaussian(3, 0.1, 7);
  gp.norm = NoiseNorm(MatrixXd::Identity(3, 3), {MatrixXd::Identity(3, 3)},
                      MonotoneSet::UnitBox(1), NoiseKind::kGeneral, 0.1);
  EXPECT_THROW(SolveMasterGaussian(gp), std::invalid_argument);
}

TEST(SolveMasterGaussian, ObjectiveDecreasesWithSigma) {
  double last = std::numeric_limits<double>::infinity();
  for (double sigma : {0.2, 0.05, 0.01}) {
    GaussianL1Problem gp = SmallGaussian(6, sigma, 8);
    gp.B = MatrixXd::Identity(6, 6);
    const double opt = SolveMasterGaussian(gp).objective;
    EXPECT_LE(opt, last + 1e-7);
    last = opt;
  }
}

TEST(SolveMaster, MixtureInstance) {
  const MixtureModel model = SmallMixture(4, 10000, 9);
  const DesignProblem p = MixtureProblem(model, 0.01 / 8);
  const DesignSolution full = SolveMaster(p);
  EXPECT_TRUE(std::isfinite(full.objective));
  EXPECT_GE(full.objective, 0.0);
  EXPECT_LE(full.zeta.sum(), 1.0 + 1e-6);
  const double e = SolveMaster(p, Mode(DesignMode::kEllitopeOnly)).objective;
  const double pp = SolveMaster(p, Mode(DesignMode::kPolytopeOnly)).objective;
  EXPECT_LE(full.objective, std::min(e, pp) + 1e-6);
}

TEST(SolveMaster, ThetaFourThirds) {
  DesignProblem p = SmallGaussian(4, 0.05, 10).ToDesignProblem();
  p.theta = 4.0 / 3.0;
  const DesignSolution sol = SolveMaster(p);
  EXPECT_LE(sol.zeta.norm(), 1.0 + 1e-6);
  // ||w||_{4/3} >= ||w||_2, so the bound exceeds the theta = 2 one.
  p.theta = 2.0;
  EXPECT_GE(sol.objective, SolveMaster(p).objective - 1e-6);
}

TEST(SolveMaster, MonotoneInTheDomain) {
  GaussianL1Problem gp = SmallGaussian(5, 0.05, 11);
  DesignProblem small = gp.ToDesignProblem();
  DesignProblem large = small;
  const Ellitope& e = small.X.ellitope;
  large.X.ellitope =
      Ellitope(e.P(), e.T(), MonotoneSet::Box(VectorXd::Constant(e.K(), 1.5)));
  // A solution for the larger set stays feasible for the smaller one.
  EXPECT_LE(SolveMaster(small).objective, SolveMaster(large).objective + 1e-6);
}

TEST(SolveMaster, WeakDualitySandwich) {
  const GaussianL1Problem gp = SmallGaussian(5, 0.02, 12);
  const DesignProblem p = gp.ToDesignProblem();
  const DesignSolution sol = SolveMaster(p);
  const PolytopeImage& poly = p.X.polytope;
  const MatrixXd Sbar = SbarMatrix(sol.S, poly);
  const MatrixXd D = (p.A * poly.R() * poly.Q_pinv()).transpose();
  for (int j = 0; j < poly.J(); ++j) {
    const VectorXd d = Sbar * poly.V().col(j) - D * sol.g[j];
    const YbarValue v = DualMaxOverYbar(d, p.X.ellitope, poly);
    EXPECT_LE(v.primal + p.norm.Evaluate(sol.g[j]), sol.varsigma + 1e-6);
  }
}

TEST(SolveMaster, QuadraticBoundsHoldOnContrastSlices) {
  const GaussianL1Problem gp = SmallGaussian(6, 0.02, 13);
  const DesignProblem p = gp.ToDesignProblem();
  const DesignSolution sol = SolveMaster(p);
  std::mt19937_64 rng(14);
  const ContrastMatrix H = AssembleContrast(sol, p.norm, rng);
  const ContrastMatrix H1 = H.Select(ColumnSide::kEllitope);
  const ContrastMatrix H2 = H.Select(ColumnSide::kPolytope);
  for (int t = 0; t < 500; ++t) {
    const VectorXd x = ScaleToContrast(RandomInSets(gp, rng, false), H.H, p.A);
    const double loss = (p.B * x).squaredNorm();
    const double u = x.dot(sol.U * x), s = x.dot(sol.S * x);
    EXPECT_LE(loss, u + s + 1e-6);
    EXPECT_LE(u + s, sol.radicand() + 1e-6);

    const VectorXd xe = ScaleToContrast(RandomInSets(gp, rng, true), H1.H, p.A);
    EXPECT_LE(xe.dot(sol.U * xe), sol.phi_gamma + sol.rho + 1e-6);

    const VectorXd xp = ScaleToContrast(RandomInSets(gp, rng, false), H2.H, p.A);
    EXPECT_LE(xp.dot(sol.S * xp), sol.varsigma + 1e-6);
  }
}

TEST(AssembleEllitopeContrast, Examples) {
  std::mt19937_64 rng(15);
  const int m = 4;
  // sigma q = 1.
  const NoiseNorm norm = GaussianNorm(1.0 / NormalQuantile(1 - 0.05 / 2), 0.05, m);
  ASSERT_NEAR(norm.euclidean_scale(), 1.0, 1e-12);
  DesignSolution sol;
  sol.Theta = MatrixXd::Zero(m, m);
  sol.Xi = sol.Theta;
  EXPECT_TRUE(AssembleEllitopeContrast(sol, norm, rng).empty());

  sol.Theta = MatrixXd::Identity(m, m);
  sol.Xi = sol.Theta;
  sol.rho = m;
  const ContrastMatrix H = AssembleEllitopeContrast(sol, norm, rng);
  ASSERT_EQ(H.cols(), m);
  EXPECT_LE((H.H.transpose() * H.H - MatrixXd::Identity(m, m)).norm(), 1e-12);
  EXPECT_NEAR(H.weights.sum(), sol.rho, 1e-12);
}

TEST(AssembleEllitopeContrast, EuclideanReconstruction) {
  const GaussianL1Problem gp = SmallGaussian(6, 0.05, 16);
  const DesignSolution sol = SolveMasterGaussian(gp);
  std::mt19937_64 rng(17);
  const ContrastMatrix H = AssembleEllitopeContrast(sol, gp.norm, rng);
  const MatrixXd rebuilt = H.H * H.weights.asDiagonal() * H.H.transpose();
  EXPECT_LE((rebuilt - sol.Theta).norm(), 1e-8 * std::max(1.0, sol.Theta.norm()));
  EXPECT_LE(H.MaxNorm(gp.norm), 1 + 1e-8);
  EXPECT_LE(H.weights.sum(), sol.rho * (1 + 1e-9));
}

TEST(AssembleEllitopeContrast, MixtureReconstruction) {
  const MixtureModel model = SmallMixture(4, 10000, 18);
  const DesignProblem p = MixtureProblem(model, 0.001);
  const DesignSolution sol = SolveMaster(p, Mode(DesignMode::kEllitopeOnly));
  std::mt19937_64 rng(19);
  const ContrastMatrix H = AssembleEllitopeContrast(sol, p.norm, rng);
  ASSERT_FALSE(H.empty());
  const MatrixXd rebuilt = H.H * H.weights.asDiagonal() * H.H.transpose();
  EXPECT_LE((rebuilt - sol.Theta).norm(), 1e-8 * std::max(1.0, sol.Theta.norm()));
  EXPECT_LE(H.MaxNorm(p.norm), 1 + 1e-8);
  EXPECT_LE(H.weights.sum(), sol.rho * (1 + 1e-9));
}

TEST(AssemblePolytopeContrast, Normalization) {
  const NoiseNorm norm = GaussianNorm(0.1, 0.05, 3);
  DesignSolution sol;
  sol.g = {VectorXd::Zero(3), VectorXd::Zero(3)};
  EXPECT_TRUE(AssemblePolytopeContrast(sol, norm).empty());
  sol.g = {VectorXd::Zero(3), VectorXd::Ones(3), VectorXd::Unit(3, 1) * 1e-14};
  const ContrastMatrix H = AssemblePolytopeContrast(sol, norm);
  ASSERT_EQ(H.cols(), 1);
  EXPECT_NEAR(norm.Evaluate(H.H.col(0)), 1.0, 1e-9);
  EXPECT_EQ(H.provenance[0], ColumnSide::kPolytope);
}

TEST(AssemblePolytopeContrast, SolvedInstance) {
  const GaussianL1Problem gp = SmallGaussian(16, 0.01, 20);
  const DesignSolution sol = SolveMasterGaussian(gp);
  int nonzero = 0;
  for (const VectorXd& g : sol.g) nonzero += gp.norm.Evaluate(g) > 1e-12;
  const ContrastMatrix H = AssemblePolytopeContrast(sol, gp.norm);
  EXPECT_EQ(H.cols(), nonzero);
  for (int j = 0; j < H.cols(); ++j) {
    EXPECT_NEAR(gp.norm.Evaluate(H.H.col(j)), 1.0, 1e-9);
  }
}

TEST(PruneContrast, DropsZerosAndDuplicates) {
  const NoiseNorm norm = GaussianNorm(0.1, 0.05, 2);
  const double c = norm.euclidean_scale();
  ContrastMatrix H = ContrastMatrix::Empty(2, 0.05);
  H.H.resize(2, 4);
  H.H << 1 / c, 0, -0.5 / c, 0, 0, 1 / c, 0, 1e-15;
  H.weights = VectorXd::Constant(4, 1.0);
  H.provenance = {ColumnSide::kEllitope, ColumnSide::kPolytope,
                  ColumnSide::kEllitope, ColumnSide::kPolytope};
  const ContrastMatrix P = PruneContrast(H, norm);
  ASSERT_EQ(P.cols(), 2);
  // The half-length duplicate folds in with weight 1/4.
  EXPECT_NEAR(P.weights(0), 1.25, 1e-12);
  const MatrixXd before = H.H * H.weights.asDiagonal() * H.H.transpose();
  const MatrixXd after = P.H * P.weights.asDiagonal() * P.H.transpose();
  EXPECT_LE((before - after).norm(), 1e-12);
}

TEST(CertifiedRisk, Examples) {
  DesignSolution sol;
  EXPECT_DOUBLE_EQ(ComputeCertifiedRisk(sol, 3, 2, 0.01).bound, 0.0);
  EXPECT_DOUBLE_EQ(ComputeCertifiedRisk(sol, 3, 2, 0.01).epsilon, 0.05);
  sol.phi_gamma = 0.25;
  sol.rho = 0.5;
  sol.varsigma = 0.25;
  EXPECT_DOUBLE_EQ(ComputeCertifiedRisk(sol, 0, 0, 0.1).bound, 2.0);
}

struct YbarInstance {
  Ellitope ellitope;
  PolytopeImage polytope;
};

YbarInstance RandomYbar(std::mt19937_64& rng, int n, int q, int p, int K,
                        int J) {
  std::uniform_int_distribution<int> pickN(n, n + 2);
  const int N = pickN(rng);
  const MatrixXd P = Gaussian(n, N, rng);
  std::vector<MatrixXd> T;
  for (int k = 0; k < K; ++k) {
    const MatrixXd F = Gaussian(N, N, rng);
    T.push_back(F.transpose() * F / N);
  }
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  const VectorXd up = VectorXd::NullaryExpr(K, [&] { return unif(rng); });
  Ellitope e(P, T, MonotoneSet::Box(up));
  PolytopeImage poly(Gaussian(n, q, rng), Gaussian(p, q, rng),
                     Gaussian(p, J, rng));
  return {e, poly};
}

TEST(DualMaxOverYbar, ZeroDirection) {
  std::mt19937_64 rng(21);
  const YbarInstance inst = RandomYbar(rng, 4, 4, 4, 2, 3);
  const YbarValue v = DualMaxOverYbar(VectorXd::Zero(4), inst.ellitope,
                                      inst.polytope);
  EXPECT_NEAR(v.primal, 0.0, 1e-8);
  EXPECT_NEAR(v.dual, 0.0, 1e-8);
}

TEST(DualMaxOverYbar, StrongDuality) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 10; ++t) {
    const YbarInstance inst = RandomYbar(rng, 4, 4, 4, 2, 3);
    const VectorXd d = Gaussian(4, 1, rng).col(0);
    const YbarValue thin = DualMaxOverYbar(d, inst.ellitope, inst.polytope);
    const YbarValue full =
        DualMaxOverYbar(d, inst.ellitope, inst.polytope, true);
    EXPECT_NEAR(thin.primal, thin.dual, 1e-6 * (1 + std::abs(thin.primal)));
    EXPECT_NEAR(full.dual, thin.dual, 1e-6 * (1 + std::abs(thin.primal)));
    EXPECT_GE(thin.primal, -1e-9);
  }
}

TEST(DualMaxOverYbar, RectangularQ) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 5; ++t) {
    const YbarInstance inst = RandomYbar(rng, 3, 2, 4, 3, 4);
    const VectorXd d = Gaussian(4, 1, rng).col(0);
    const YbarValue v = DualMaxOverYbar(d, inst.ellitope, inst.polytope);
    EXPECT_NEAR(v.primal, v.dual, 1e-6 * (1 + std::abs(v.primal)));
  }
}

TEST(DualMaxOverYbar, BallContainment) {
  std::mt19937_64 rng(24);
  const double r = 0.7;
  const Ellitope ball = Ellitope::Ball(4, r);
  const PolytopeImage poly(MatrixXd::Identity(4, 4), MatrixXd::Identity(4, 4),
                           2 * Gaussian(4, 5, rng));
  for (int t = 0; t < 5; ++t) {
    const VectorXd d = Gaussian(4, 1, rng).col(0);
    const YbarValue v = DualMaxOverYbar(d, ball, poly);
    EXPECT_LE(v.primal, r * d.norm() + 1e-7);
    EXPECT_NEAR(v.primal, v.dual, 1e-6 * (1 + std::abs(v.primal)));
  }
}

}  // namespace
}  // namespace polyest
