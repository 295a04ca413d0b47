#pragma once

#include <optional>
#include <string>
#include <vector>

#include "polyest/conic/program.hpp"
#include "polyest/conic/solver.hpp"
#include "polyest/linalg.hpp"

namespace polyest {

enum class MonotoneKind { kBox, kScaledSimplex, kConicOracle };

/// Convex compact monotone subset of the nonnegative orthant. Houses the
/// sets 𝒯 (signal ellitope) and 𝒮 (noise-norm ball).
///
///   box            {s : 0 <= s <= upper}
///   scaled simplex {s >= 0 : sum_k s_k / upper_k <= 1}
///   conic oracle   placeholder; operations needing it throw UnsupportedError
class MonotoneSet {
 public:
  static MonotoneSet Box(VectorXd upper);
  static MonotoneSet UnitBox(int dim);
  static MonotoneSet ScaledSimplex(VectorXd upper);
  static MonotoneSet ConicOracle(int dim, std::string description);

  MonotoneKind kind() const { return kind_; }
  int dim() const { return dim_; }
  /// Box bounds, or simplex vertex scales.
  const VectorXd& upper_bounds() const { return upper_; }
  const std::string& description() const { return description_; }

  bool Contains(const Eigen::Ref<const VectorXd>& s, double tol = 1e-12) const;

  /// Adds tau in u * set (tau_k, u affine), the perspective used by gauge
  /// and conic-membership programs.
  void AddScaledMembership(conic::ProblemBuilder& builder,
                           const std::vector<conic::LinExpr>& tau,
                           const conic::LinExpr& u) const;

 private:
  MonotoneSet(MonotoneKind kind, int dim, VectorXd upper, std::string desc);
  MonotoneKind kind_;
  int dim_;
  VectorXd upper_;
  std::string description_;
};

/// max_{s in set} g^T s.
double SupportFunction(const MonotoneSet& set,
                       const Eigen::Ref<const VectorXd>& g);

/// {x = P z : z^T T_k z <= t_k, k <= K, t in domain}.
class Ellitope {
 public:
  Ellitope(MatrixXd P, std::vector<MatrixXd> T, MonotoneSet domain);

  /// {x : ||x||_2 <= radius}.
  static Ellitope Ball(int n, double radius);
  /// {x : ||x||_2 <= rho2, ||x||_inf <= rho_inf}, K = n + 1 with the
  /// Euclidean constraint first.
  static Ellitope BallBox(int n, double rho2, double rho_inf);

  int n() const { return static_cast<int>(P_.rows()); }
  int N() const { return static_cast<int>(P_.cols()); }
  int K() const { return static_cast<int>(T_.size()); }
  const MatrixXd& P() const { return P_; }
  const std::vector<MatrixXd>& T() const { return T_; }
  const MonotoneSet& domain() const { return domain_; }
  bool p_is_identity() const { return p_identity_; }

  /// E_k = 2 T_k^{1/2}.
  MatrixXd E(int k) const;
  /// Thin factor with F_k^T F_k = 4 T_k (rows = rank of T_k).
  const MatrixXd& ThinE(int k) const { return thin_E_.at(k); }

  /// Adds "x in ellitope" for affine x (length n).
  void AddMembership(conic::ProblemBuilder& builder,
                     const std::vector<conic::LinExpr>& x) const;

 private:
  MatrixXd P_;
  std::vector<MatrixXd> T_;
  MonotoneSet domain_;
  std::vector<MatrixXd> thin_E_;
  bool p_identity_ = false;
};

/// Gauge min{u >= 0 : x in u * ellitope}; +infinity when x is outside the
/// range of P. Throws SolverError when the conic solve fails.
double EllitopeGauge(const Ellitope& e, const Eigen::Ref<const VectorXd>& x,
                     const conic::ConicSolver& solver = {});

/// x in ellitope within tol (gauge <= 1 + tol).
bool EllitopeMembership(const Ellitope& e, const Eigen::Ref<const VectorXd>& x,
                        double tol = 1e-7,
                        const conic::ConicSolver& solver = {});

/// {x = R w : Q w in Conv{+-v_1, ..., +-v_J}} with Ker Q = {0}.
class PolytopeImage {
 public:
  PolytopeImage(MatrixXd R, MatrixXd Q, MatrixXd V);

  /// {x : ||x||_1 <= radius}: R = Q = I, V = radius * I.
  static PolytopeImage L1Ball(int n, double radius);

  int n() const { return static_cast<int>(R_.rows()); }
  int q() const { return static_cast<int>(R_.cols()); }
  int p() const { return static_cast<int>(Q_.rows()); }
  int J() const { return static_cast<int>(V_.cols()); }
  const MatrixXd& R() const { return R_; }
  const MatrixXd& Q() const { return Q_; }
  const MatrixXd& V() const { return V_; }
  const MatrixXd& Q_pinv() const { return Q_pinv_; }

  /// Adds "x in polytope image" for affine x (length n).
  void AddMembership(conic::ProblemBuilder& builder,
                     const std::vector<conic::LinExpr>& x) const;

  /// The points +-R Q^+ v_j.
  std::vector<VectorXd> Vertices() const;

 private:
  MatrixXd R_;
  MatrixXd Q_;
  MatrixXd V_;
  MatrixXd Q_pinv_;
};

/// [Q^+]^T R^T S R Q^+.
MatrixXd SbarMatrix(const Eigen::Ref<const MatrixXd>& S,
                    const PolytopeImage& poly);

enum class ExtraConstraint { kProbabilitySimplex };

/// Signal set X = ellitope ∩ polytope ∩ extras. Its symmetrization is
/// assumed to lie in ellitope ∩ polytope.
struct SignalSet {
  Ellitope ellitope;
  PolytopeImage polytope;
  std::vector<ExtraConstraint> extras;

  int n() const { return ellitope.n(); }
  bool has_simplex() const;

  /// Adds "x in X" for affine x.
  void AddMembership(conic::ProblemBuilder& builder,
                     const std::vector<conic::LinExpr>& x) const;
  /// Adds "x in ellitope ∩ polytope", the set on which the design bounds
  /// hold (contains the symmetrization).
  void AddSymmetricHullMembership(conic::ProblemBuilder& builder,
                                  const std::vector<conic::LinExpr>& x) const;

  /// Vertices used by the Dirichlet signal sampler: simplex vertices when
  /// the simplex constraint is present, otherwise the polytope vertices.
  std::vector<VectorXd> SamplingVertices() const;

  /// Membership of X within tol (polytope and extras checked by a conic
  /// feasibility program).
  bool Contains(const Eigen::Ref<const VectorXd>& x, double tol = 1e-7,
                const conic::ConicSolver& solver = {}) const;
};

/// Affine expressions for a plain variable block.
std::vector<conic::LinExpr> Exprs(const conic::VecVar& v);

}  // namespace polyest
