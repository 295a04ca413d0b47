#pragma once

#include <random>
#include <string>
#include <vector>

#include "polyest/conic/solver.hpp"
#include "polyest/contrast.hpp"
#include "polyest/linalg.hpp"
#include "polyest/noise.hpp"
#include "polyest/sets.hpp"

namespace polyest {

/// Recover w = B x from omega = A x + xi, x in X, with the noise controlled
/// by the norm family pi_delta.
struct DesignProblem {
  SignalSet X;
  MatrixXd A;  // m x n
  MatrixXd B;  // nu x n
  NoiseNorm norm;
  /// Loss ||.||_theta, theta in {1, 4/3, 2}.
  double theta = 2.0;

  int m() const { return static_cast<int>(A.rows()); }
  int n() const { return static_cast<int>(A.cols()); }
  int nu() const { return static_cast<int>(B.rows()); }
  /// Throws std::invalid_argument on inconsistent dimensions and
  /// UnsupportedError on unsupported theta or set kinds.
  void Validate() const;
};

/// kEllitopeOnly forces S = 0, g_j = 0 (so varsigma = 0); kPolytopeOnly
/// forces U = 0, Theta = 0, gamma = 0 (so rho = 0).
enum class DesignMode { kFull, kEllitopeOnly, kPolytopeOnly };

const char* ToString(DesignMode mode);
/// Accepts "full", "ellitope-only", "polytope-only".
DesignMode ParseDesignMode(const std::string& name);

/// Default solver for design programs (tolerances 1e-8).
conic::ConicSolver DefaultDesignSolver();

struct DesignOptions {
  DesignMode mode = DesignMode::kFull;
  conic::ConicSolver solver = DefaultDesignSolver();
  /// Tolerance of the post-solve constraint re-verification.
  double verify_tol = 1e-6;
};

/// Certificate that max over the polytope-side set of d^T y is bounded, for
/// one polytope vertex j. eps[k] has length N (full E_k form).
struct PolytopeDual {
  VectorXd beta;  // p
  VectorXd eta;   // n
  std::vector<VectorXd> eps;
  VectorXd phi;  // K
  VectorXd psi;  // K
};

struct DesignSolution {
  DesignMode mode = DesignMode::kFull;
  double theta = 2.0;
  MatrixXd Theta;  // m x m, = S_delta Xi S_delta^T
  MatrixXd Xi;     // M x M
  VectorXd zeta;   // nu
  double rho = 0.0;
  double varsigma = 0.0;
  VectorXd gamma;  // K
  MatrixXd U;
  MatrixXd S;
  std::vector<VectorXd> g;  // J vectors in R^m
  std::vector<PolytopeDual> duals;
  /// Scale of the cone tying (Xi, rho): KappaConst(M, L) on the general
  /// path, 1 on the Euclidean-ball path where rho = (sigma q)^2 Tr(Theta).
  double kappa = 1.0;
  double phi_gamma = 0.0;  // phi_T(gamma)
  /// phi_T(gamma) + rho + varsigma of the returned (repaired) point.
  double objective = 0.0;
  /// Optimal value reported by the conic solver.
  double solver_objective = 0.0;

  /// Extra per-j blocks of the Gaussian specialization (empty otherwise).
  std::vector<VectorXd> alpha;
  std::vector<VectorXd> beta_ball;

  conic::SolveStatus status = conic::SolveStatus::kNumericalFailure;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;

  /// phi_T(gamma) + rho + varsigma.
  double radicand() const { return phi_gamma + rho + varsigma; }
};

/// Independent re-evaluation of every constraint of the master program.
struct DesignVerification {
  std::vector<std::string> failures;
  /// Largest violation seen, relative to the scale of each check.
  double worst = 0.0;
  bool ok() const { return failures.empty(); }
  std::string Summary() const;
};

DesignVerification VerifyDesign(const DesignProblem& problem,
                                const DesignSolution& solution,
                                double tol = 1e-6);

/// The design program failed its post-solve verification.
class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimizes phi_T(gamma) + rho + varsigma over the master program. Throws
/// SolverError when the solver does not reach a (near-)optimal point and
/// DesignError when the returned point fails VerifyDesign.
DesignSolution SolveMaster(const DesignProblem& problem,
                           const DesignOptions& options = {});

/// Instance of the Gaussian specialization: X_s = {||x||_1 <= rho1} ∩
/// {||x||_2 <= rho2, ||x||_inf <= rho_inf}, Euclidean-ball noise norm.
struct GaussianL1Problem {
  MatrixXd A;
  MatrixXd B;
  double rho1 = 1.0;
  double rho2 = 1.0;
  double rho_inf = 1.0;
  NoiseNorm norm;

  /// Same instance in the general form (theta = 2, V = rho1 I).
  DesignProblem ToDesignProblem() const;
};

/// Specialized program: minimize sum(gamma) + (sigma q)^2 Tr(Theta) + varsigma
/// with per-j blocks rho1 ||rho1 S e_j - A^T g_j - alpha_j - beta_j||_inf +
/// rho_inf ||alpha_j||_1 + rho2 ||beta_j||_2 + sigma q ||g_j||_2 <= varsigma.
/// The returned solution also carries the equivalent general-form duals and
/// is verified against ToDesignProblem().
DesignSolution SolveMasterGaussian(const GaussianL1Problem& problem,
                                   const DesignOptions& options = {});

/// Ellitope-side columns. Euclidean kind: eigenvectors of Theta scaled to
/// unit norm, weights (sigma q)^2 lambda_j. General kind: randomized rank-one
/// extraction of (Xi, rho) lifted through S_delta.
ContrastMatrix AssembleEllitopeContrast(const DesignSolution& solution,
                                        const NoiseNorm& norm,
                                        std::mt19937_64& rng);

/// Polytope-side columns h_j = g_j / pi(g_j), skipping pi(g_j) <= 1e-12.
ContrastMatrix AssemblePolytopeContrast(const DesignSolution& solution,
                                        const NoiseNorm& norm);

/// Drops columns with pi(h) < 1e-12 and near-duplicates (|cos| > 1 - 1e-10).
/// A dropped duplicate's weight is folded into the column kept.
ContrastMatrix PruneContrast(const ContrastMatrix& H, const NoiseNorm& norm);

/// [H_1, H_2] after pruning.
ContrastMatrix AssembleContrast(const DesignSolution& solution,
                                const NoiseNorm& norm, std::mt19937_64& rng);

struct CertifiedRisk {
  double epsilon = 0.0;
  double bound = 0.0;
};

/// epsilon = (M_cols + J_cols) delta, bound = 2 sqrt(phi_T(gamma) + rho +
/// varsigma).
CertifiedRisk ComputeCertifiedRisk(const DesignSolution& solution, int M_cols,
                                   int J_cols, double delta);

struct YbarValue {
  double primal = 0.0;
  double dual = 0.0;
};

/// max of d^T y over {y = V lambda = Q w : ||lambda||_1 <= 1, R w in the
/// ellitope}, computed by the direct program and by its conic dual.
/// `full_E` selects the N-dimensional E_k blocks in the dual instead of the
/// thin factors.
YbarValue DualMaxOverYbar(const Eigen::Ref<const VectorXd>& d,
                          const Ellitope& ellitope,
                          const PolytopeImage& polytope, bool full_E = false,
                          const conic::ConicSolver& solver = {});

}  // namespace polyest
