#include "polyest/linalg.hpp"

#include <algorithm>
#include <stdexcept>

namespace polyest {

MatrixXd Symmetrize(const Eigen::Ref<const MatrixXd>& M) {
  if (M.rows() != M.cols()) {
    throw std::invalid_argument("Symmetrize: matrix is not square");
  }
  return 0.5 * (M + M.transpose());
}

MatrixXd PsdSqrt(const Eigen::Ref<const MatrixXd>& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Symmetrize(M));
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() *
         eig.eigenvectors().transpose();
}

MatrixXd PsdFactor(const Eigen::Ref<const MatrixXd>& M, double rank_tol) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Symmetrize(M));
  const VectorXd& ev = eig.eigenvalues();
  const double cutoff = rank_tol * std::max(1.0, ev.maxCoeff());
  std::vector<int> kept;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) kept.push_back(i);
  }
  MatrixXd F(static_cast<int>(kept.size()), M.cols());
  for (int r = 0; r < static_cast<int>(kept.size()); ++r) {
    F.row(r) = std::sqrt(ev(kept[r])) *
               eig.eigenvectors().col(kept[r]).transpose();
  }
  return F;
}

VectorXd SymmetricEigenvalues(const Eigen::Ref<const MatrixXd>& M) {
  if (M.rows() == 0) return VectorXd();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Symmetrize(M),
                                              Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

double MinEigenvalue(const Eigen::Ref<const MatrixXd>& M) {
  return M.rows() == 0 ? 0.0 : SymmetricEigenvalues(M).minCoeff();
}

double MaxEigenvalue(const Eigen::Ref<const MatrixXd>& M) {
  return M.rows() == 0 ? 0.0 : SymmetricEigenvalues(M).maxCoeff();
}

MatrixXd PseudoInverse(const Eigen::Ref<const MatrixXd>& M, double rcond) {
  if (M.size() == 0) return MatrixXd::Zero(M.cols(), M.rows());
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = rcond * sv(0);
  VectorXd inv(sv.size());
  for (int i = 0; i < sv.size(); ++i) {
    inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

VectorXd Svec(const Eigen::Ref<const MatrixXd>& X) {
  const int d = static_cast<int>(X.rows());
  VectorXd v(SvecSize(d));
  int k = 0;
  for (int j = 0; j < d; ++j) {
    v(k++) = X(j, j);
    for (int i = j + 1; i < d; ++i) {
      v(k++) = kSqrt2 * 0.5 * (X(i, j) + X(j, i));
    }
  }
  return v;
}

MatrixXd Smat(const Eigen::Ref<const VectorXd>& v, int d) {
  if (v.size() != SvecSize(d)) {
    throw std::invalid_argument("Smat: packed length does not match dimension");
  }
  MatrixXd X(d, d);
  int k = 0;
  for (int j = 0; j < d; ++j) {
    X(j, j) = v(k++);
    for (int i = j + 1; i < d; ++i) {
      X(i, j) = X(j, i) = v(k++) / kSqrt2;
    }
  }
  return X;
}

MatrixXd StackColumns(const std::vector<VectorXd>& columns, int rows) {
  MatrixXd M(rows, static_cast<int>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != rows) {
      throw std::invalid_argument("StackColumns: column length mismatch");
    }
    M.col(static_cast<int>(j)) = columns[j];
  }
  return M;
}

MatrixXd RowSpaceBasis(const Eigen::Ref<const MatrixXd>& M) {
  if (M.rows() == 0 || M.cols() == 0) return MatrixXd(0, M.cols());
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = 1e-10 * std::max(1.0, sv(0));
  int rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;
  return svd.matrixV().leftCols(rank).transpose();
}

}  // namespace polyest
