#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace polyest {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

inline constexpr double kSqrt2 = 1.4142135623730950488;

/// Returns (M + M^T) / 2.
MatrixXd Symmetrize(const Eigen::Ref<const MatrixXd>& M);

/// Symmetric square root through an eigendecomposition; negative eigenvalues
/// are clipped at zero.
MatrixXd PsdSqrt(const Eigen::Ref<const MatrixXd>& M);

/// Thin factor F with F^T F = M for a PSD matrix M. Rows correspond to the
/// eigen-directions whose eigenvalue exceeds `rank_tol * max(1, lambda_max)`.
MatrixXd PsdFactor(const Eigen::Ref<const MatrixXd>& M, double rank_tol = 1e-12);

double MinEigenvalue(const Eigen::Ref<const MatrixXd>& M);
double MaxEigenvalue(const Eigen::Ref<const MatrixXd>& M);
VectorXd SymmetricEigenvalues(const Eigen::Ref<const MatrixXd>& M);

/// Moore-Penrose pseudoinverse via SVD.
MatrixXd PseudoInverse(const Eigen::Ref<const MatrixXd>& M, double rcond = 1e-12);

/// Length of the packed lower triangle of a d x d symmetric matrix.
constexpr int SvecSize(int d) { return d * (d + 1) / 2; }

/// Position of entry (i, j), i >= j, in the column-major packed lower
/// triangle.
constexpr int SvecIndex(int d, int i, int j) {
  return j * d - j * (j - 1) / 2 + (i - j);
}

/// Packs a symmetric matrix with off-diagonals scaled by sqrt(2), so that
/// svec(X)^T svec(Y) = Tr(XY).
VectorXd Svec(const Eigen::Ref<const MatrixXd>& X);
MatrixXd Smat(const Eigen::Ref<const VectorXd>& v, int d);

/// Orthonormal basis of the row space of M (as rows), keeping singular
/// values above 1e-10 * max(1, sigma_max). Used to drop redundant equalities.
MatrixXd RowSpaceBasis(const Eigen::Ref<const MatrixXd>& M);

/// Builds a matrix from a list of equal-length columns.
MatrixXd StackColumns(const std::vector<VectorXd>& columns, int rows);

}  // namespace polyest
