#include "polyest/cone_decomposition.hpp"

#include <random>

#include <gtest/gtest.h>

namespace polyest {
namespace {

NoiseNorm L2Ball(int M) {
  return NoiseNorm(MatrixXd::Identity(M, M), {MatrixXd::Identity(M, M)},
                   MonotoneSet::UnitBox(1), NoiseKind::kGeneral, 0.05);
}

NoiseNorm RandomBall(int M, int L, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  std::uniform_int_distribution<int> rank(1, M);
  std::vector<MatrixXd> S;
  for (int l = 0; l < L; ++l) {
    const MatrixXd F = MatrixXd::NullaryExpr(rank(rng), M, [&] { return nd(rng); });
    S.push_back(F.transpose() * F);
  }
  S.front() += 0.1 * MatrixXd::Identity(M, M);
  const VectorXd upper = VectorXd::NullaryExpr(L, [&] { return unif(rng); });
  return NoiseNorm(MatrixXd::Identity(M, M), S, MonotoneSet::Box(upper),
                   NoiseKind::kGeneral, 0.05);
}

// Random PSD Xi with rho the smallest value making (Xi, rho) a member.
std::pair<MatrixXd, double> RandomMember(const NoiseNorm& norm,
                                         std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> rank(1, norm.M());
  const MatrixXd F =
      MatrixXd::NullaryExpr(norm.M(), rank(rng), [&] { return nd(rng); });
  const MatrixXd Xi = F * F.transpose();
  double rho = 0;
  for (int l = 0; l < norm.L(); ++l) {
    rho = std::max(rho, Xi.cwiseProduct(norm.S_ell()[l]).sum() /
                            norm.domain().upper_bounds()(l));
  }
  return {Xi, rho * KappaConst(norm.M(), norm.L())};
}

TEST(KappaConst, Values) {
  EXPECT_NEAR(KappaConst(1, 1), 2 * std::sqrt(2.0) * std::log(4.0), 1e-14);
  EXPECT_NEAR(KappaConst(1, 1), 3.9210, 1e-4);
  EXPECT_NEAR(KappaConst(2, 1), 2 * std::sqrt(2.0) * std::log(16.0), 1e-14);
  for (int M = 1; M < 10; ++M) {
    for (int L = 1; L < 10; ++L) {
      EXPECT_LT(KappaConst(M, L), KappaConst(M + 1, L));
      EXPECT_LT(KappaConst(M, L), KappaConst(M, L + 1));
    }
  }
}

TEST(ConeCheck, Examples) {
  const int M = 3;
  const NoiseNorm ball = L2Ball(M);
  const double kappa = KappaConst(M, 1);
  EXPECT_TRUE(ConeCheck(ball, MatrixXd::Zero(M, M), 0.0).has_value());
  const auto member = ConeCheck(ball, MatrixXd::Identity(M, M), kappa * M);
  ASSERT_TRUE(member.has_value());
  EXPECT_EQ(member->certificate, VectorXd::Ones(1));
  EXPECT_FALSE(
      ConeCheck(ball, MatrixXd::Identity(M, M), kappa * M * 0.99).has_value());
  EXPECT_FALSE(ConeCheck(ball, -MatrixXd::Identity(M, M), 1.0).has_value());
}

TEST(ConeCheck, SimplexDomain) {
  // Two constraints sharing a budget s_1 + s_2 <= 1.
  const MatrixXd I = MatrixXd::Identity(2, 2);
  MatrixXd e1 = MatrixXd::Zero(2, 2), e2 = MatrixXd::Zero(2, 2);
  e1(0, 0) = 1;
  e2(1, 1) = 1;
  const NoiseNorm norm(I, {e1, e2}, MonotoneSet::ScaledSimplex(VectorXd::Ones(2)),
                       NoiseKind::kGeneral, 0.1);
  // Tr(Xi S_l) = 1 each, so s = (kappa/rho)(1, 1) needs rho >= 2 kappa.
  const double kappa = KappaConst(2, 2);
  EXPECT_TRUE(ConeCheck(norm, I, 2 * kappa).has_value());
  EXPECT_FALSE(ConeCheck(norm, I, 1.9 * kappa).has_value());
}

TEST(ConeCheck, ForwardDirection) {
  // sum_j lambda_j g_j g_j^T with rho(g_j) <= 1 lies in the cone with
  // rho = kappa * sum(lambda).
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  std::exponential_distribution<double> ex(1.0);
  for (int t = 0; t < 100; ++t) {
    const int M = 2 + t % 5, L = 1 + t % 4;
    const NoiseNorm norm = RandomBall(M, L, rng);
    MatrixXd Xi = MatrixXd::Zero(M, M);
    double total = 0;
    for (int j = 0; j < 1 + t % 6; ++j) {
      VectorXd g = VectorXd::NullaryExpr(M, [&] { return nd(rng); });
      g /= norm.ZGauge(g);
      const double lambda = ex(rng);
      Xi += lambda * g * g.transpose();
      total += lambda;
    }
    EXPECT_TRUE(ConeCheck(norm, Xi, KappaConst(M, L) * total).has_value());
  }
}

TEST(DctMatrix, Structure) {
  EXPECT_EQ(DctMatrix(1), MatrixXd::Ones(1, 1));
  const MatrixXd O2 = DctMatrix(2);
  const double r = 1 / std::sqrt(2.0);
  EXPECT_NEAR((O2 - (MatrixXd(2, 2) << r, r, r, -r).finished()).norm(), 0, 1e-15);
  for (int M : {3, 16, 31}) {
    const MatrixXd O = DctMatrix(M);
    EXPECT_LE((O.transpose() * O - MatrixXd::Identity(M, M)).norm(), 1e-10);
    EXPECT_LE(O.cwiseAbs().maxCoeff(), std::sqrt(2.0 / M) + 1e-15);
  }
}

TEST(ExtractRankOne, UnitBallIdentity) {
  std::mt19937_64 rng(1);
  const NoiseNorm ball = L2Ball(2);
  const RankOneDecomposition d =
      ExtractRankOne(ball, MatrixXd::Identity(2, 2), 2.0, rng);
  EXPECT_EQ(d.trials_used, 1);
  EXPECT_EQ(d.lambdas, VectorXd::Ones(2));
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(d.G.col(j).norm(), 1.0, 1e-14);
  EXPECT_LE((d.Reconstruct() - MatrixXd::Identity(2, 2)).norm(), 1e-14);
}

TEST(ExtractRankOne, ZeroGivesEmpty) {
  std::mt19937_64 rng(1);
  const RankOneDecomposition d =
      ExtractRankOne(L2Ball(3), MatrixXd::Zero(3, 3), 0.0, rng);
  EXPECT_EQ(d.size(), 0);
  EXPECT_EQ(d.G.rows(), 3);
  EXPECT_THROW(ExtractRankOne(L2Ball(3), MatrixXd::Identity(3, 3), 0.0, rng),
               std::invalid_argument);
}

TEST(ExtractRankOne, RandomMembersDecompose) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 40; ++t) {
    const int M = 2 << (t % 4), L = 1 + t % 3;
    const NoiseNorm norm = RandomBall(M, L, rng);
    const auto [Xi, rho] = RandomMember(norm, rng);
    ASSERT_TRUE(ConeCheck(norm, Xi, rho).has_value());
    const RankOneDecomposition d = ExtractRankOne(norm, Xi, rho, rng);
    EXPECT_NEAR(d.lambdas.sum(), rho, 1e-12 * rho);
    for (int j = 0; j < d.size(); ++j) {
      EXPECT_LE(norm.ZGauge(d.G.col(j)), 1 + 1e-8);
    }
    EXPECT_LE((d.Reconstruct() - Xi).norm(), 1e-8 * Xi.norm());
  }
}

TEST(ExtractRankOne, MixtureBall) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<VectorXd> a;
  std::vector<MatrixXd> Theta;
  for (int i = 0; i < 4; ++i) {
    const VectorXd ai = VectorXd::NullaryExpr(4, [&] { return nd(rng); });
    a.push_back(ai.normalized());
    const MatrixXd F = MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
    Theta.push_back(F * F.transpose() / MaxEigenvalue(F * F.transpose()));
  }
  const NoiseNorm norm = MixtureNorm(MixtureModel(a, Theta, 1000), 0.05);
  for (int t = 0; t < 10; ++t) {
    const auto [Xi, rho] = RandomMember(norm, rng);
    const RankOneDecomposition d = ExtractRankOne(norm, Xi, rho, rng);
    EXPECT_LE((d.Reconstruct() - Xi).norm(), 1e-8 * Xi.norm());
    const ContrastMatrix H = LiftToContrasts(d, norm);
    EXPECT_EQ(H.H, d.G);  // S_delta = I
    EXPECT_LE(H.MaxNorm(norm), 1 + 1e-8);
  }
}

TEST(ExtractRankOne, EveryTrialReconstructs) {
  std::mt19937_64 rng(4);
  const NoiseNorm norm = RandomBall(6, 3, rng);
  const auto [Xi, rho] = RandomMember(norm, rng);
  const MatrixXd Z = PsdSqrt(Xi);
  const MatrixXd O = DctMatrix(6);
  int accepted = 0;
  const int T = 400;
  for (int t = 0; t < T; ++t) {
    const ExtractionTrial trial = RunExtractionTrial(norm, Z, rho, O, rng);
    EXPECT_LE((trial.Z_eps * trial.Z_eps.transpose() - Xi).norm(),
              1e-10 * Xi.norm());
    accepted += trial.accepted;
  }
  EXPECT_GE(static_cast<double>(accepted) / T, 0.5 - 3 * std::sqrt(0.25 / T));
}

TEST(ExtractRankOne, FailureCarriesDiagnostics) {
  // rho far below the member threshold: gauges exceed 1 on every trial.
  std::mt19937_64 rng(5);
  const NoiseNorm ball = L2Ball(3);
  try {
    ExtractRankOne(ball, MatrixXd::Identity(3, 3), 0.3, rng, 8);
    FAIL() << "expected ExtractionError";
  } catch (const ExtractionError& e) {
    EXPECT_EQ(e.trials, 8);
    EXPECT_NEAR(e.best_max_gauge, std::sqrt(3 / 0.3), 1e-12);
  }
}

TEST(LiftToContrasts, GeneralSdeltaReconstruction) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  const int M = 3;
  const MatrixXd Sd = MatrixXd::NullaryExpr(5, M, [&] { return nd(rng); });
  const NoiseNorm base = RandomBall(M, 2, rng);
  const NoiseNorm norm(Sd, base.S_ell(), base.domain(), NoiseKind::kGeneral, 0.05);
  const auto [Xi, rho] = RandomMember(norm, rng);
  const RankOneDecomposition d = ExtractRankOne(norm, Xi, rho, rng);
  const ContrastMatrix H = LiftToContrasts(d, norm);
  const MatrixXd Theta = Sd * Xi * Sd.transpose();
  EXPECT_LE((H.H * H.weights.asDiagonal() * H.H.transpose() - Theta).norm(),
            1e-8 * Theta.norm());
  EXPECT_LE(H.MaxNorm(norm), 1 + 1e-7);
  EXPECT_EQ(LiftToContrasts(RankOneDecomposition{VectorXd(0), MatrixXd(M, 0)},
                            norm).cols(),
            0);
}

TEST(VerifySandwich, Examples) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  const int M = 4;
  const NoiseNorm ball = L2Ball(M);
  VectorXd h = VectorXd::NullaryExpr(M, [&] { return nd(rng); });
  h.normalize();
  EXPECT_TRUE(VerifySandwich(ball, h * h.transpose(), rng).ok());
  EXPECT_TRUE(VerifySandwich(ball, MatrixXd::Identity(M, M) / M, rng).ok());

  const NoiseNorm norm = RandomBall(M, 3, rng);
  MatrixXd Xi = MatrixXd::Zero(M, M);
  std::uniform_real_distribution<double> unif;
  VectorXd w = VectorXd::NullaryExpr(5, [&] { return unif(rng); });
  w /= w.sum();
  for (int j = 0; j < 5; ++j) {
    VectorXd g = VectorXd::NullaryExpr(M, [&] { return nd(rng); });
    g /= norm.ZGauge(g);
    Xi += w(j) * g * g.transpose();
  }
  const SandwichReport r = VerifySandwich(norm, Xi, rng);
  EXPECT_TRUE(r.in_outer_set);
  EXPECT_TRUE(r.ok());
}

}  // namespace
}  // namespace polyest
