#pragma once

#include <string>
#include <utility>
#include <vector>

#include "polyest/linalg.hpp"

namespace polyest::conic {

/// Cone K = R^l_+ x Q^{q_1} x ... x S^{d_1}_+ x ..., in that order. PSD
/// blocks are stored as packed lower triangles (see polyest::Svec).
struct ConeDims {
  int linear = 0;
  std::vector<int> soc;
  std::vector<int> psd;

  int TotalRows() const;
  /// Degree of the cone: l + #SOC + sum of PSD orders.
  int Degree() const;
};

/// Standard form
///   minimize c^T x  s.t.  G x + s = h,  A x = b,  s in K.
struct ConeProgram {
  VectorXd c;
  SparseMatrix G;
  VectorXd h;
  SparseMatrix A;
  VectorXd b;
  ConeDims dims;

  int num_variables() const { return static_cast<int>(c.size()); }
  /// Throws std::invalid_argument on inconsistent dimensions.
  void Validate() const;
};

/// Affine expression a^T x + a0 over the variables of a ProblemBuilder.
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double constant) : constant_(constant) {}  // NOLINT
  static LinExpr Var(int index, double coeff = 1.0);

  LinExpr& operator+=(const LinExpr& other);
  LinExpr& operator-=(const LinExpr& other);
  LinExpr& operator*=(double scale);
  void AddTerm(int index, double coeff);

  const std::vector<std::pair<int, double>>& terms() const { return terms_; }
  double constant() const { return constant_; }
  double Evaluate(const Eigen::Ref<const VectorXd>& x) const;

 private:
  std::vector<std::pair<int, double>> terms_;
  double constant_ = 0.0;
};

LinExpr operator+(LinExpr lhs, const LinExpr& rhs);
LinExpr operator-(LinExpr lhs, const LinExpr& rhs);
LinExpr operator-(LinExpr e);
LinExpr operator*(double scale, LinExpr e);
LinExpr operator*(LinExpr e, double scale);

/// Symmetric matrix whose entries are affine expressions; only the lower
/// triangle is stored.
class SymExpr {
 public:
  SymExpr() = default;
  explicit SymExpr(int dim);
  /// Constant matrix (symmetrized).
  static SymExpr Constant(const Eigen::Ref<const MatrixXd>& M);

  int dim() const { return dim_; }
  LinExpr& at(int i, int j);
  const LinExpr& at(int i, int j) const;

  SymExpr& operator+=(const SymExpr& other);
  SymExpr& operator-=(const SymExpr& other);
  SymExpr& operator*=(double scale);
  MatrixXd Evaluate(const Eigen::Ref<const VectorXd>& x) const;

 private:
  int dim_ = 0;
  std::vector<LinExpr> lower_;
};

SymExpr operator+(SymExpr lhs, const SymExpr& rhs);
SymExpr operator-(SymExpr lhs, const SymExpr& rhs);

/// Block of d(d+1)/2 scalar variables representing a symmetric matrix.
struct SymVar {
  int dim = 0;
  int offset = 0;
  int index(int i, int j) const;
  LinExpr operator()(int i, int j) const { return LinExpr::Var(index(i, j)); }
  SymExpr expr() const;
  MatrixXd Value(const Eigen::Ref<const VectorXd>& x) const;
};

/// Contiguous block of scalar variables.
struct VecVar {
  int size = 0;
  int offset = 0;
  LinExpr operator()(int i) const { return LinExpr::Var(offset + i); }
  VectorXd Value(const Eigen::Ref<const VectorXd>& x) const {
    return x.segment(offset, size);
  }
};

/// Collects variables, a linear objective and conic constraints, and lowers
/// them to a ConeProgram.
class ProblemBuilder {
 public:
  VecVar AddVector(int size);
  LinExpr AddScalar();
  SymVar AddSymmetric(int dim);
  int num_variables() const { return num_vars_; }

  void Minimize(const LinExpr& objective);

  /// e == 0
  void AddEquality(const LinExpr& e);
  /// e >= 0
  void AddNonnegative(const LinExpr& e);
  /// t >= ||u||_2
  void AddSecondOrderCone(const LinExpr& t, const std::vector<LinExpr>& u);
  /// t >= ||u||_1; introduces |u| bound variables.
  void AddL1Bound(const LinExpr& t, const std::vector<LinExpr>& u);
  /// t >= |u_i| for all i.
  void AddLinfBound(const LinExpr& t, const std::vector<LinExpr>& u);
  /// M ⪰ 0
  void AddPsd(const SymExpr& M);

  /// Constant term of the objective, not part of the cone program.
  double objective_offset() const { return objective_.constant(); }
  ConeProgram Build() const;

 private:
  int num_vars_ = 0;
  LinExpr objective_;
  std::vector<LinExpr> equalities_;
  std::vector<LinExpr> nonneg_;
  std::vector<std::vector<LinExpr>> socs_;
  std::vector<SymExpr> psds_;
};

}  // namespace polyest::conic
