#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

#include "polyest/conic/solver.hpp"

namespace polyest {

/// Requested feature lies outside the supported set kinds (e.g. a conic-oracle
/// monotone set where a closed form is required).
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The conic solver did not return an optimal solution. Carries the status
/// and the residuals of the best iterate.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, const conic::SolverResult& result)
      : std::runtime_error(Describe(what, result)),
        status(result.status),
        primal_residual(result.primal_residual),
        dual_residual(result.dual_residual) {}

  conic::SolveStatus status;
  double primal_residual;
  double dual_residual;

 private:
  static std::string Describe(const std::string& what,
                              const conic::SolverResult& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  " [%s, pres=%.3g, dres=%.3g, pobj=%.10g, dobj=%.10g, it=%d]",
                  conic::ToString(r.status).c_str(), r.primal_residual,
                  r.dual_residual, r.primal_objective, r.dual_objective,
                  r.iterations);
    return what + buf;
  }
};

}  // namespace polyest
