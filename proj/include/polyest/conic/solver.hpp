#pragma once

#include <string>

#include "polyest/conic/program.hpp"

namespace polyest::conic {

enum class SolveStatus {
  kOptimal,
  kPrimalInfeasible,
  kDualInfeasible,
  kMaxIterations,
  kNumericalFailure,
};

std::string ToString(SolveStatus status);

struct SolverOptions {
  double feastol = 1e-9;
  double abstol = 1e-9;
  double reltol = 1e-9;
  int max_iterations = 150;
  bool verbose = false;
};

/// Solution of a ConeProgram. On kOptimal the vectors satisfy the primal and
/// dual conditions up to the reported residuals; on infeasibility they hold
/// the (normalized) certificate.
struct SolverResult {
  SolveStatus status = SolveStatus::kNumericalFailure;
  VectorXd x;
  VectorXd y;
  VectorXd z;
  VectorXd s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  /// max of ||Ax - b|| / max(1, ||b||) and ||Gx + s - h|| / max(1, ||h||).
  double primal_residual = 0.0;
  /// ||A^T y + G^T z + c|| / max(1, ||c||).
  double dual_residual = 0.0;
  /// s^T z.
  double gap = 0.0;
  int iterations = 0;

  bool ok() const { return status == SolveStatus::kOptimal; }
};

/// Primal-dual interior-point method on the homogeneous self-dual embedding
/// with Nesterov-Todd scaling and Mehrotra correction. Supports nonnegative
/// orthants, second-order cones and PSD cones.
SolverResult SolveConeProgram(const ConeProgram& program,
                              const SolverOptions& options = {});

/// Handle carrying the cone capabilities and tolerances used by the design
/// and estimation programs.
class ConicSolver {
 public:
  struct Capabilities {
    bool linear = true;
    bool second_order = true;
    bool psd = true;
  };

  ConicSolver() = default;
  explicit ConicSolver(SolverOptions options) : options_(options) {}

  Capabilities capabilities() const { return {}; }
  const SolverOptions& options() const { return options_; }
  SolverOptions& mutable_options() { return options_; }

  SolverResult Solve(const ConeProgram& program) const {
    return SolveConeProgram(program, options_);
  }

 private:
  SolverOptions options_;
};

}  // namespace polyest::conic
