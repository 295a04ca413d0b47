#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyest/conic/solver.hpp"
#include "polyest/contrast.hpp"
#include "polyest/linalg.hpp"
#include "polyest/noise.hpp"
#include "polyest/sets.hpp"

namespace polyest {

/// ||v||_theta.
double ThetaNorm(const Eigen::Ref<const VectorXd>& v, double theta);

struct EstimateResult {
  VectorXd x_hat;
  VectorXd w_hat;
  /// ||H^T (omega - A x_hat)||_inf.
  double residual = 0.0;
  conic::SolveStatus status = conic::SolveStatus::kNumericalFailure;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

/// x_hat in Argmin {||H^T (A y - omega)||_inf : y in X}, w_hat = B x_hat.
/// Throws std::invalid_argument for an empty H and SolverError when the
/// program is infeasible or the solver fails.
EstimateResult Estimate(const Eigen::Ref<const VectorXd>& omega,
                        const ContrastMatrix& H, const SignalSet& X,
                        const Eigen::Ref<const MatrixXd>& A,
                        const Eigen::Ref<const MatrixXd>& B,
                        const conic::ConicSolver& solver = {});

/// Which set the oracle maximizes over: ellitope ∩ polytope, or the ellitope.
enum class OracleSet { kSymmetrized, kEllitope };

struct PBoundOracleResult {
  double value = 0.0;
  VectorXd argmax;
};

/// Lower bound on max {x^T V x : x in the set, ||G^T A x||_inf <= 1} for
/// n <= 8. Candidates are the polytope vertices and `budget` random
/// directions, each pushed radially to the boundary of the feasible set and
/// then improved by gradient and random steps retracted onto that boundary.
/// Every candidate is feasible, so the value never overstates the maximum.
PBoundOracleResult PBoundOracle(const Eigen::Ref<const MatrixXd>& V,
                                const SignalSet& X, OracleSet which,
                                const ContrastMatrix& G,
                                const Eigen::Ref<const MatrixXd>& A,
                                std::mt19937_64& rng, int budget = 200);

/// A^{-1} omega for square invertible A, otherwise the minimum-norm
/// least-squares solution A^+ omega.
VectorXd LeastSquaresBaseline(const Eigen::Ref<const VectorXd>& omega,
                              const Eigen::Ref<const MatrixXd>& A);

/// Dirichlet(1, ..., 1) combinations of X.SamplingVertices(), rejected until
/// they fall in the ellitope.
class SignalSampler {
 public:
  explicit SignalSampler(SignalSet X, int max_rejections = 10000);
  VectorXd Sample(std::mt19937_64& rng) const;
  const SignalSet& set() const { return X_; }

 private:
  SignalSet X_;
  std::vector<VectorXd> vertices_;
  int max_rejections_;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observation model omega = A x + xi.
class ObservationModel {
 public:
  static ObservationModel Gaussian(MatrixXd A, double sigma);
  static ObservationModel Mixture(MixtureModel model);

  const MatrixXd& A() const { return A_; }
  VectorXd Observe(const Eigen::Ref<const VectorXd>& x,
                   std::mt19937_64& rng) const;

 private:
  ObservationModel(MatrixXd A, double sigma, std::optional<MixtureModel> mix);
  MatrixXd A_;
  double sigma_ = 0.0;
  std::optional<MixtureModel> mixture_;
};

/// Generator for trial t of a run seeded with `seed`.
std::mt19937_64 TrialRng(std::uint64_t seed, std::uint64_t trial);

/// Lower empirical quantile: the k-th smallest value, k = ceil((1 - eps) T).
double EmpiricalQuantile(std::vector<double> values, double epsilon);

struct RiskReport {
  std::string name;
  std::vector<double> errors;
  /// Per trial: ||H^T xi||_inf <= 1 (the event behind the risk bound).
  std::vector<bool> noise_event;
  double quantile = 0.0;
  double bound = 0.0;
  double epsilon = 0.0;
  int exceed = 0;  // errors above the bound

  int trials() const { return static_cast<int>(errors.size()); }
  double exceed_rate() const;
  /// sqrt(eps (1 - eps) / T).
  double standard_error() const;
  /// exceed_rate <= eps + 3 SE.
  bool coverage_ok() const;
  /// Trials where the noise event held but the error exceeded the bound.
  int implication_failures() const;
};

/// One estimator under simulation. `H` (optional) enables the noise-event
/// bookkeeping.
struct SimulatedEstimator {
  std::string name;
  std::function<VectorXd(const VectorXd& omega)> estimate;
  double bound = 0.0;
  const ContrastMatrix* H = nullptr;
};

/// Runs all estimators on the same (x, omega) per trial. Trial t uses
/// TrialRng(seed, t): the signal is drawn first, then the noise.
std::vector<RiskReport> SimulateEstimators(
    const SignalSampler& sampler, const ObservationModel& observation,
    const Eigen::Ref<const MatrixXd>& B,
    const std::vector<SimulatedEstimator>& estimators, int trials,
    double theta, double epsilon, std::uint64_t seed);

/// Single polyhedral estimate with contrast H and certified bound `bound`.
RiskReport MonteCarloRisk(const SignalSampler& sampler,
                          const ObservationModel& observation,
                          const Eigen::Ref<const MatrixXd>& B,
                          const ContrastMatrix& H, double bound, int trials,
                          double theta, double epsilon, std::uint64_t seed,
                          const conic::ConicSolver& solver = {});

}  // namespace polyest
