#include "polyest/cone_decomposition.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "polyest/errors.hpp"

namespace polyest {

namespace {

constexpr double kAcceptSlack = 1e-12;

void CheckXi(const NoiseNorm& norm, const Eigen::Ref<const MatrixXd>& Xi) {
  if (Xi.rows() != norm.M() || Xi.cols() != norm.M()) {
    throw std::invalid_argument("Xi must be M x M with M = " +
                                std::to_string(norm.M()));
  }
}

}  // namespace

double KappaConst(int M, int L) {
  if (M < 1 || L < 1) throw std::invalid_argument("KappaConst: M, L >= 1");
  return 2.0 * kSqrt2 * std::log(4.0 * M * M * L);
}

std::optional<ConeMember> ConeCheck(const NoiseNorm& norm,
                                    const Eigen::Ref<const MatrixXd>& Xi,
                                    double rho, double tol,
                                    std::optional<double> kappa) {
  CheckXi(norm, Xi);
  const MatrixXd sym = Symmetrize(Xi);
  if (rho < 0.0 || MinEigenvalue(sym) < -tol) return std::nullopt;
  const double k = kappa.value_or(KappaConst(norm.M(), norm.L()));
  const double slack = tol * std::max(1.0, rho);
  const MonotoneSet& dom = norm.domain();
  if (dom.kind() == MonotoneKind::kConicOracle) {
    throw UnsupportedError("ConeCheck: conic-oracle domain");
  }
  const VectorXd& upper = dom.upper_bounds();
  VectorXd traces(norm.L());
  for (int l = 0; l < norm.L(); ++l) {
    traces(l) = sym.cwiseProduct(norm.S_ell()[l]).sum();
  }
  VectorXd s(norm.L());
  if (dom.kind() == MonotoneKind::kBox) {
    // The box is monotone, so s = upper is the best certificate.
    for (int l = 0; l < norm.L(); ++l) {
      if (traces(l) > rho / k * upper(l) + slack) return std::nullopt;
    }
    s = upper;
  } else {
    // Smallest admissible s, then the simplex budget.
    if (rho == 0.0) {
      if ((traces.array() > slack).any()) return std::nullopt;
      s.setZero();
    } else {
      s = ((traces.array() - slack).max(0.0) * (k / rho)).matrix();
      if (s.cwiseQuotient(upper).sum() > 1.0) return std::nullopt;
    }
  }
  return ConeMember{sym, rho, k, s};
}

MatrixXd DctMatrix(int M) {
  if (M < 1) throw std::invalid_argument("DctMatrix: M >= 1");
  MatrixXd O(M, M);
  for (int k = 0; k < M; ++k) {
    const double c = std::sqrt((k == 0 ? 1.0 : 2.0) / M);
    for (int j = 0; j < M; ++j) {
      O(k, j) = c * std::cos(M_PI * (2 * j + 1) * k / (2.0 * M));
    }
  }
  return O;
}

MatrixXd RankOneDecomposition::Reconstruct() const {
  return G * lambdas.asDiagonal() * G.transpose();
}

ExtractionError::ExtractionError(int trials, double best_max_gauge)
    : std::runtime_error("rank-one extraction failed after " +
                         std::to_string(trials) +
                         " trials; best max gauge " +
                         std::to_string(best_max_gauge)),
      trials(trials),
      best_max_gauge(best_max_gauge) {}

ExtractionTrial RunExtractionTrial(const NoiseNorm& norm,
                                   const Eigen::Ref<const MatrixXd>& Z,
                                   double rho, const MatrixXd& dct,
                                   std::mt19937_64& rng) {
  const int M = static_cast<int>(Z.rows());
  std::bernoulli_distribution coin(0.5);
  VectorXd eps(M);
  for (int i = 0; i < M; ++i) eps(i) = coin(rng) ? 1.0 : -1.0;
  ExtractionTrial trial;
  trial.Z_eps = Z * eps.asDiagonal() * dct;
  const double scale = std::sqrt(M / rho);
  for (int j = 0; j < M; ++j) {
    trial.max_gauge =
        std::max(trial.max_gauge, norm.ZGauge(scale * trial.Z_eps.col(j)));
  }
  trial.accepted = trial.max_gauge <= 1.0 + kAcceptSlack;
  return trial;
}

RankOneDecomposition ExtractRankOne(const NoiseNorm& norm,
                                    const Eigen::Ref<const MatrixXd>& Xi,
                                    double rho, std::mt19937_64& rng,
                                    int max_trials) {
  CheckXi(norm, Xi);
  const int M = norm.M();
  RankOneDecomposition out;
  if (rho <= 0.0) {
    if (Xi.cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("ExtractRankOne: rho = 0 needs Xi = 0");
    }
    out.lambdas.resize(0);
    out.G.resize(M, 0);
    return out;
  }
  if (max_trials < 1) throw std::invalid_argument("ExtractRankOne: max_trials");
  const MatrixXd Z = PsdSqrt(Xi);
  const MatrixXd dct = DctMatrix(M);
  double best = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= max_trials; ++t) {
    ExtractionTrial trial = RunExtractionTrial(norm, Z, rho, dct, rng);
    best = std::min(best, trial.max_gauge);
    if (trial.accepted) {
      out.lambdas = VectorXd::Constant(M, rho / M);
      out.G = std::sqrt(M / rho) * trial.Z_eps;
      out.trials_used = t;
      out.max_gauge = trial.max_gauge;
      return out;
    }
  }
  throw ExtractionError(max_trials, best);
}

ContrastMatrix LiftToContrasts(const RankOneDecomposition& decomp,
                               const NoiseNorm& norm) {
  if (decomp.G.rows() != norm.M()) {
    throw std::invalid_argument("LiftToContrasts: dimension mismatch");
  }
  ContrastMatrix out;
  out.H = norm.S_delta() * decomp.G;
  out.weights = decomp.lambdas;
  out.provenance.assign(decomp.size(), ColumnSide::kEllitope);
  out.delta = norm.delta();
  return out;
}

SandwichReport VerifySandwich(const NoiseNorm& norm,
                              const Eigen::Ref<const MatrixXd>& Xi,
                              std::mt19937_64& rng) {
  SandwichReport report;
  report.kappa = KappaConst(norm.M(), norm.L());
  // (Xi, kappa) in the cone is exactly Tr(Xi S_l) <= s_l.
  report.in_outer_set =
      ConeCheck(norm, Xi, report.kappa, 1e-8, report.kappa).has_value();
  const RankOneDecomposition d = ExtractRankOne(norm, Xi, report.kappa, rng);
  const ContrastMatrix H = LiftToContrasts(d, norm);
  report.sum_lambda = d.lambdas.sum();
  report.max_norm = H.MaxNorm(norm);
  report.trials_used = d.trials_used;
  const MatrixXd Theta = norm.S_delta() * Xi * norm.S_delta().transpose();
  const MatrixXd rebuilt = H.H * H.weights.asDiagonal() * H.H.transpose();
  report.reconstruction_error =
      (Theta - rebuilt).norm() / std::max(Theta.norm(), 1e-300);
  if (Theta.norm() == 0.0) report.reconstruction_error = rebuilt.norm();
  return report;
}

}  // namespace polyest
