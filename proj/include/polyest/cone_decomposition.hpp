#pragma once

#include <optional>
#include <random>
#include <stdexcept>

#include "polyest/contrast.hpp"
#include "polyest/linalg.hpp"
#include "polyest/noise.hpp"

namespace polyest {

/// 2 sqrt(2) ln(4 M^2 L).
double KappaConst(int M, int L);

/// (Xi, rho) together with s in the domain certifying
/// Tr(Xi S_l) <= (rho / kappa) s_l for every l.
struct ConeMember {
  MatrixXd Xi;
  double rho = 0.0;
  double kappa = 0.0;
  VectorXd certificate;
};

/// Membership of (Xi, rho) in the cone built on the z-space ball of `norm`.
/// Uses kappa = KappaConst(M, L) unless `kappa` is given. Returns nullopt when
/// no certificate exists within tol * max(1, rho).
std::optional<ConeMember> ConeCheck(const NoiseNorm& norm,
                                    const Eigen::Ref<const MatrixXd>& Xi,
                                    double rho, double tol = 1e-8,
                                    std::optional<double> kappa = std::nullopt);

/// Orthonormal DCT-II: O_kj = c_k cos(pi (2j + 1) k / (2M)), c_0 = sqrt(1/M),
/// c_k = sqrt(2/M) otherwise.
MatrixXd DctMatrix(int M);

/// Xi = sum_j lambda_j g_j g_j^T with g_j the columns of G.
struct RankOneDecomposition {
  VectorXd lambdas;
  MatrixXd G;
  int trials_used = 0;
  /// max_j rho(g_j) of the accepted trial.
  double max_gauge = 0.0;

  int size() const { return static_cast<int>(lambdas.size()); }
  MatrixXd Reconstruct() const;
};

/// Extraction ran out of trials. Carries the best trial seen.
class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(int trials, double best_max_gauge);
  int trials;
  double best_max_gauge;
};

/// Randomized rank-one extraction. Trial t draws a Rademacher vector e from
/// `rng` (M fair signs, in order), forms Z^e = Xi^{1/2} Diag(e) O and
/// g_j = sqrt(M / rho) Col_j[Z^e], lambda_j = rho / M; the first trial with
/// every rho(g_j) <= 1 is returned. Trials consume the generator sequentially,
/// so the result is a deterministic function of the generator state.
RankOneDecomposition ExtractRankOne(const NoiseNorm& norm,
                                    const Eigen::Ref<const MatrixXd>& Xi,
                                    double rho, std::mt19937_64& rng,
                                    int max_trials = 64);

/// Outcome of a single extraction trial (acceptance-rate studies).
struct ExtractionTrial {
  MatrixXd Z_eps;
  double max_gauge = 0.0;
  bool accepted = false;
};
ExtractionTrial RunExtractionTrial(const NoiseNorm& norm,
                                   const Eigen::Ref<const MatrixXd>& Z,
                                   double rho, const MatrixXd& dct,
                                   std::mt19937_64& rng);

/// h_j = S_delta g_j, tagged as ellitope-side columns with weights lambda_j.
ContrastMatrix LiftToContrasts(const RankOneDecomposition& decomp,
                               const NoiseNorm& norm);

struct SandwichReport {
  bool in_outer_set = false;  // Tr(Xi S_l) <= s_l for some s in the domain
  double kappa = 0.0;
  double sum_lambda = 0.0;
  double max_norm = 0.0;  // max_j pi_delta(h_j)
  double reconstruction_error = 0.0;  // relative Frobenius error
  int trials_used = 0;
  bool ok(double tol = 1e-8) const {
    return in_outer_set && sum_lambda <= kappa * (1 + tol) &&
           max_norm <= 1 + tol && reconstruction_error <= tol;
  }
};

/// Takes Xi with Tr(Xi S_l) <= s_l (H = S_delta Xi S_delta^T in the outer
/// set), extracts with rho = kappa and reports sum(lambda) <= kappa and the
/// admissibility of the lifted columns.
SandwichReport VerifySandwich(const NoiseNorm& norm,
                              const Eigen::Ref<const MatrixXd>& Xi,
                              std::mt19937_64& rng);

}  // namespace polyest
