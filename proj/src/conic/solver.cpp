#include "polyest/conic/solver.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace polyest::conic {

std::string ToString(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kPrimalInfeasible:
      return "primal_infeasible";
    case SolveStatus::kDualInfeasible:
      return "dual_infeasible";
    case SolveStatus::kMaxIterations:
      return "max_iterations";
    case SolveStatus::kNumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SocScaling {
  MatrixXd W;
  MatrixXd Winv;
  VectorXd lambda;
};

struct PsdScaling {
  MatrixXd R;
  MatrixXd Rinv;
  VectorXd lambda;  // eigenvalues of the scaled point (diagonal)
};

MatrixXd Congruence(const MatrixXd& M, const MatrixXd& X) {
  return M * X * M.transpose();
}

double JDot(const Eigen::Ref<const VectorXd>& u,
            const Eigen::Ref<const VectorXd>& v) {
  return u(0) * v(0) - u.tail(u.size() - 1).dot(v.tail(v.size() - 1));
}

// Offsets of each cone block in the stacked slack vector.
struct Layout {
  explicit Layout(const ConeDims& dims) : dims(dims) {
    int row = dims.linear;
    for (int q : dims.soc) {
      soc_offset.push_back(row);
      row += q;
    }
    for (int d : dims.psd) {
      psd_offset.push_back(row);
      row += SvecSize(d);
    }
    rows = row;
  }
  const ConeDims& dims;
  std::vector<int> soc_offset;
  std::vector<int> psd_offset;
  int rows = 0;
};

VectorXd IdentityElement(const Layout& layout) {
  VectorXd e = VectorXd::Zero(layout.rows);
  e.head(layout.dims.linear).setOnes();
  for (int off : layout.soc_offset) e(off) = 1.0;
  for (std::size_t k = 0; k < layout.dims.psd.size(); ++k) {
    const int d = layout.dims.psd[k];
    for (int j = 0; j < d; ++j) e(layout.psd_offset[k] + SvecIndex(d, j, j)) = 1.0;
  }
  return e;
}

VectorXd JordanProduct(const Layout& layout, const VectorXd& u,
                       const VectorXd& v) {
  VectorXd r(layout.rows);
  const int l = layout.dims.linear;
  r.head(l) = u.head(l).cwiseProduct(v.head(l));
  for (std::size_t k = 0; k < layout.dims.soc.size(); ++k) {
    const int off = layout.soc_offset[k];
    const int q = layout.dims.soc[k];
    const auto uk = u.segment(off, q);
    const auto vk = v.segment(off, q);
    r(off) = uk.dot(vk);
    r.segment(off + 1, q - 1) =
        uk(0) * vk.tail(q - 1) + vk(0) * uk.tail(q - 1);
  }
  for (std::size_t k = 0; k < layout.dims.psd.size(); ++k) {
    const int off = layout.psd_offset[k];
    const int d = layout.dims.psd[k];
    const MatrixXd U = Smat(u.segment(off, SvecSize(d)), d);
    const MatrixXd V = Smat(v.segment(off, SvecSize(d)), d);
    const MatrixXd UV = U * V;
    r.segment(off, SvecSize(d)) = Svec(0.5 * (UV + UV.transpose()));
  }
  return r;
}

// Largest alpha with x + alpha * dx in the cone (x interior).
double MaxStep(const Layout& layout, const VectorXd& x, const VectorXd& dx) {
  double alpha = kInf;
  for (int i = 0; i < layout.dims.linear; ++i) {
    if (dx(i) < 0.0) alpha = std::min(alpha, -x(i) / dx(i));
  }
  for (std::size_t k = 0; k < layout.dims.soc.size(); ++k) {
    const int off = layout.soc_offset[k];
    const int q = layout.dims.soc[k];
    const auto xk = x.segment(off, q);
    const auto dk = dx.segment(off, q);
    // (x0 + a d0)^2 - ||x1 + a d1||^2 = qa a^2 + 2 qb a + qc, qc > 0.
    const double qa = JDot(dk, dk);
    const double qb = JDot(xk, dk);
    const double qc = JDot(xk, xk);
    double root = kInf;
    if (std::abs(qa) <= 1e-300) {
      if (qb < 0.0) root = -qc / (2.0 * qb);
    } else {
      const double disc = qb * qb - qa * qc;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double temp = -qb - std::copysign(sq, qb);
        const double r1 = temp / qa;
        const double r2 = temp != 0.0 ? qc / temp : kInf;
        for (double r : {r1, r2}) {
          if (r > 0.0) root = std::min(root, r);
        }
      }
    }
    // Also guard the x0 >= 0 half of the cone.
    if (dk(0) < 0.0) root = std::min(root, -xk(0) / dk(0));
    alpha = std::min(alpha, root);
  }
  for (std::size_t k = 0; k < layout.dims.psd.size(); ++k) {
    const int off = layout.psd_offset[k];
    const int d = layout.dims.psd[k];
    const MatrixXd X = Smat(x.segment(off, SvecSize(d)), d);
    const MatrixXd D = Smat(dx.segment(off, SvecSize(d)), d);
    Eigen::LLT<MatrixXd> llt(X);
    if (llt.info() != Eigen::Success) return 0.0;
    const MatrixXd Linv = llt.matrixL().solve(MatrixXd::Identity(d, d));
    const double lmin = MinEigenvalue(Linv * D * Linv.transpose());
    if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
  }
  return alpha;
}

class Scaling {
 public:
  Scaling(const Layout& layout, const VectorXd& s, const VectorXd& z)
      : layout_(layout) {
    const int l = layout.dims.linear;
    lp_w_ = (s.head(l).array() / z.head(l).array()).sqrt();
    lambda_ = VectorXd::Zero(layout.rows);
    lambda_.head(l) = (s.head(l).array() * z.head(l).array()).sqrt();
    for (std::size_t k = 0; k < layout.dims.soc.size(); ++k) {
      const int off = layout.soc_offset[k];
      const int q = layout.dims.soc[k];
      const VectorXd sk = s.segment(off, q);
      const VectorXd zk = z.segment(off, q);
      const double sn = std::sqrt(std::max(JDot(sk, sk), 1e-300));
      const double zn = std::sqrt(std::max(JDot(zk, zk), 1e-300));
      const VectorXd sb = sk / sn;
      const VectorXd zb = zk / zn;
      const double gamma = std::sqrt(std::max(0.5 * (1.0 + sb.dot(zb)), 1e-300));
      VectorXd wb = sb;
      wb(0) += zb(0);
      wb.tail(q - 1) -= zb.tail(q - 1);
      wb /= 2.0 * gamma;
      const double beta = std::sqrt(sn / zn);
      MatrixXd Wb(q, q);
      Wb(0, 0) = wb(0);
      Wb.block(0, 1, 1, q - 1) = wb.tail(q - 1).transpose();
      Wb.block(1, 0, q - 1, 1) = wb.tail(q - 1);
      Wb.block(1, 1, q - 1, q - 1) =
          MatrixXd::Identity(q - 1, q - 1) +
          wb.tail(q - 1) * wb.tail(q - 1).transpose() / (1.0 + wb(0));
      MatrixXd JWbJ = Wb;
      JWbJ.block(0, 1, 1, q - 1) *= -1.0;
      JWbJ.block(1, 0, q - 1, 1) *= -1.0;
      SocScaling sc;
      sc.W = beta * Wb;
      sc.Winv = JWbJ / beta;
      sc.lambda = sc.W * zk;
      lambda_.segment(off, q) = sc.lambda;
      soc_.push_back(std::move(sc));
    }
    for (std::size_t k = 0; k < layout.dims.psd.size(); ++k) {
      const int off = layout.psd_offset[k];
      const int d = layout.dims.psd[k];
      const MatrixXd S = Smat(s.segment(off, SvecSize(d)), d);
      const MatrixXd Z = Smat(z.segment(off, SvecSize(d)), d);
      Eigen::LLT<MatrixXd> ls(S);
      Eigen::LLT<MatrixXd> lz(Z);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) {
        throw std::runtime_error("scaling: iterate left the PSD cone");
      }
      const MatrixXd Ls = ls.matrixL();
      const MatrixXd Lz = lz.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls,
                                     Eigen::ComputeFullU | Eigen::ComputeFullV);
      const VectorXd lam = svd.singularValues();
      PsdScaling sc;
      sc.lambda = lam;
      sc.R = Ls * svd.matrixV() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
      sc.Rinv = lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                svd.matrixU().transpose() * Lz.transpose();
      MatrixXd Lam = lam.asDiagonal();
      lambda_.segment(off, SvecSize(d)) = Svec(Lam);
      psd_.push_back(std::move(sc));
    }
  }

  const VectorXd& lambda() const { return lambda_; }

  enum class Op { kW, kWT, kWinv, kWinvT };

  VectorXd Apply(Op op, const VectorXd& v) const {
    VectorXd r(layout_.rows);
    const int l = layout_.dims.linear;
    if (op == Op::kW || op == Op::kWT) {
      r.head(l) = lp_w_.cwiseProduct(v.head(l));
    } else {
      r.head(l) = v.head(l).cwiseQuotient(lp_w_);
    }
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = layout_.soc_offset[k];
      const int q = layout_.dims.soc[k];
      const bool inverse = op == Op::kWinv || op == Op::kWinvT;
      r.segment(off, q) = (inverse ? soc_[k].Winv : soc_[k].W) * v.segment(off, q);
    }
    for (std::size_t k = 0; k < psd_.size(); ++k) {
      const int off = layout_.psd_offset[k];
      const int d = layout_.dims.psd[k];
      const MatrixXd V = Smat(v.segment(off, SvecSize(d)), d);
      MatrixXd M;
      switch (op) {
        case Op::kW:
          M = Congruence(psd_[k].R.transpose(), V);
          break;
        case Op::kWT:
          M = Congruence(psd_[k].R, V);
          break;
        case Op::kWinv:
          M = Congruence(psd_[k].Rinv.transpose(), V);
          break;
        case Op::kWinvT:
          M = Congruence(psd_[k].Rinv, V);
          break;
      }
      r.segment(off, SvecSize(d)) = Svec(M);
    }
    return r;
  }

  // Solves lambda o x = r.
  VectorXd LambdaDivide(const VectorXd& r) const {
    VectorXd x(layout_.rows);
    const int l = layout_.dims.linear;
    x.head(l) = r.head(l).cwiseQuotient(lambda_.head(l));
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = layout_.soc_offset[k];
      const int q = layout_.dims.soc[k];
      const VectorXd& lam = soc_[k].lambda;
      const auto rk = r.segment(off, q);
      const double det = JDot(lam, lam);
      const double x0 = (lam(0) * rk(0) - lam.tail(q - 1).dot(rk.tail(q - 1))) / det;
      x(off) = x0;
      x.segment(off + 1, q - 1) = (rk.tail(q - 1) - x0 * lam.tail(q - 1)) / lam(0);
    }
    for (std::size_t k = 0; k < psd_.size(); ++k) {
      const int off = layout_.psd_offset[k];
      const int d = layout_.dims.psd[k];
      const VectorXd& lam = psd_[k].lambda;
      MatrixXd M = Smat(r.segment(off, SvecSize(d)), d);
      for (int j = 0; j < d; ++j) {
        for (int i = 0; i < d; ++i) M(i, j) *= 2.0 / (lam(i) + lam(j));
      }
      x.segment(off, SvecSize(d)) = Svec(M);
    }
    return x;
  }

  // Block-diagonal W^{-T} as a sparse matrix.
  SparseMatrix WinvTMatrix() const {
    std::vector<Triplet> t;
    const int l = layout_.dims.linear;
    for (int i = 0; i < l; ++i) t.emplace_back(i, i, 1.0 / lp_w_(i));
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = layout_.soc_offset[k];
      const int q = layout_.dims.soc[k];
      // W is symmetric for the second-order cone.
      for (int j = 0; j < q; ++j) {
        for (int i = 0; i < q; ++i) t.emplace_back(off + i, off + j, soc_[k].Winv(i, j));
      }
    }
    for (std::size_t k = 0; k < psd_.size(); ++k) {
      const int off = layout_.psd_offset[k];
      const int d = layout_.dims.psd[k];
      const MatrixXd& Ri = psd_[k].Rinv;
      for (int l2 = 0; l2 < d; ++l2) {
        for (int k2 = l2; k2 < d; ++k2) {
          MatrixXd E = Ri.col(k2) * Ri.col(l2).transpose();
          if (k2 != l2) {
            E = (E + E.transpose()).eval() / kSqrt2;
          }
          const VectorXd col = Svec(E);
          const int c = off + SvecIndex(d, k2, l2);
          for (int i = 0; i < col.size(); ++i) {
            if (col(i) != 0.0) t.emplace_back(off + i, c, col(i));
          }
        }
      }
    }
    SparseMatrix M(layout_.rows, layout_.rows);
    M.setFromTriplets(t.begin(), t.end());
    return M;
  }

 private:
  const Layout& layout_;
  VectorXd lp_w_;
  VectorXd lambda_;
  std::vector<SocScaling> soc_;
  std::vector<PsdScaling> psd_;
};

// Solver for [0 A^T G^T; A 0 0; G 0 -W^T W] [x; y; z] = [bx; by; bz].
class KktSolver {
 public:
  // `min_rel` is the smallest static regularization tried, relative to the
  // largest diagonal entry of the normal matrix.
  KktSolver(const ConeProgram& prog, const Scaling& scaling, double min_rel)
      : prog_(prog), scaling_(scaling) {
    Y_ = scaling.WinvTMatrix() * prog.G;
    SparseMatrix H = SparseMatrix(Y_.transpose()) * Y_;
    if (prog.A.rows() > 0) H += SparseMatrix(prog.A.transpose()) * prog.A;
    double diag_max = 1.0;
    for (int i = 0; i < H.rows(); ++i) diag_max = std::max(diag_max, H.coeff(i, i));
    // Smallest static regularization that factors: larger shifts slow the
    // refinement down and leave a floor on the dual residual.
    SparseMatrix I(H.rows(), H.cols());
    I.setIdentity();
    H.makeCompressed();
    bool factored = false;
    for (double rel : {1e-15, 1e-12, 1e-9}) {
      if (rel < min_rel) continue;
      reg_ = rel * diag_max;
      chol_.compute(SparseMatrix(H + reg_ * I));
      if (chol_.info() == Eigen::Success) {
        factored = true;
        break;
      }
    }
    if (!factored) throw std::runtime_error("KKT factorization failed");
    const int p = static_cast<int>(prog.A.rows());
    if (p > 0) {
      HinvAt_ = chol_.solve(MatrixXd(prog.A.transpose()));
      MatrixXd S = prog.A * HinvAt_;
      const double smax = std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
      S.diagonal().array() += 1e-13 * smax;
      schur_.compute(S);
      if (schur_.info() != Eigen::Success) {
        throw std::runtime_error("KKT Schur complement factorization failed");
      }
    }
  }

  void Solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
             VectorXd* x, VectorXd* y, VectorXd* z) const {
    SolveOnce(bx, by, bz, x, y, z);
    // The regularized factorization acts as a preconditioner: refine while
    // the residual of the unregularized system keeps shrinking and keep the
    // best iterate.
    const double scale = 1.0 + std::max({bx.lpNorm<Eigen::Infinity>(),
                                         by.size() ? by.lpNorm<Eigen::Infinity>() : 0.0,
                                         bz.lpNorm<Eigen::Infinity>()});
    VectorXd bestx = *x, besty = *y, bestz = *z;
    double best = kInf;
    for (int pass = 0; pass < 10; ++pass) {
      const VectorXd rx = bx - prog_.A.transpose() * *y - prog_.G.transpose() * *z;
      const VectorXd ry = by - prog_.A * *x;
      const VectorXd wz = scaling_.Apply(Scaling::Op::kWT,
                                         scaling_.Apply(Scaling::Op::kW, *z));
      const VectorXd rz = bz - (prog_.G * *x - wz);
      const double res = std::max({rx.lpNorm<Eigen::Infinity>(),
                                   ry.size() ? ry.lpNorm<Eigen::Infinity>() : 0.0,
                                   rz.lpNorm<Eigen::Infinity>()});
      if (res < best) {
        const bool enough = res > 0.9 * best;
        best = res;
        bestx = *x;
        besty = *y;
        bestz = *z;
        if (res <= 1e-14 * scale || enough) break;
      } else {
        break;
      }
      VectorXd dx, dy, dz;
      SolveOnce(rx, ry, rz, &dx, &dy, &dz);
      *x += dx;
      *y += dy;
      *z += dz;
    }
    *x = std::move(bestx);
    *y = std::move(besty);
    *z = std::move(bestz);
  }

 private:
  void SolveOnce(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
                 VectorXd* x, VectorXd* y, VectorXd* z) const {
    const VectorXd wbz = scaling_.Apply(Scaling::Op::kWinvT, bz);
    VectorXd rhs = bx + Y_.transpose() * wbz;
    if (prog_.A.rows() > 0) {
      rhs += prog_.A.transpose() * by;
      const VectorXd x0 = chol_.solve(rhs);
      *y = schur_.solve(prog_.A * x0 - by);
      *x = x0 - HinvAt_ * *y;
    } else {
      *x = chol_.solve(rhs);
      *y = VectorXd();
    }
    *z = scaling_.Apply(Scaling::Op::kWinv, Y_ * *x - wbz);
  }

  const ConeProgram& prog_;
  const Scaling& scaling_;
  SparseMatrix Y_;
  double reg_ = 0.0;
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> chol_;
  MatrixXd HinvAt_;
  Eigen::LDLT<MatrixXd> schur_;
};

}  // namespace

SolverResult SolveConeProgram(const ConeProgram& prog,
                              const SolverOptions& options) {
  prog.Validate();
  const Layout layout(prog.dims);
  const int n = prog.num_variables();
  const int p = static_cast<int>(prog.A.rows());
  const double degree = prog.dims.Degree();

  const VectorXd e = IdentityElement(layout);
  VectorXd x = VectorXd::Zero(n);
  VectorXd y = VectorXd::Zero(p);
  VectorXd s = e;
  VectorXd z = e;
  double tau = 1.0;
  double kappa = 1.0;

  const double bnorm = std::max(1.0, prog.b.size() ? prog.b.norm() : 0.0);
  const double hnorm = std::max(1.0, prog.h.norm());
  const double cnorm = std::max(1.0, prog.c.norm());

  SolverResult result;
  result.status = SolveStatus::kMaxIterations;

  auto record = [&](SolveStatus status, int iter) {
    result.status = status;
    result.iterations = iter;
    if (status == SolveStatus::kPrimalInfeasible ||
        status == SolveStatus::kDualInfeasible) {
      result.x = x;
      result.y = y;
      result.z = z;
      result.s = s;
      return;
    }
    result.x = x / tau;
    result.y = y / tau;
    result.z = z / tau;
    result.s = s / tau;
    result.primal_objective = prog.c.dot(result.x);
    result.dual_objective =
        -(p ? prog.b.dot(result.y) : 0.0) - prog.h.dot(result.z);
    const double ry = p ? (prog.A * result.x - prog.b).norm() / bnorm : 0.0;
    const double rz = (prog.G * result.x + result.s - prog.h).norm() / hnorm;
    result.primal_residual = std::max(ry, rz);
    result.dual_residual =
        (prog.A.transpose() * result.y + prog.G.transpose() * result.z + prog.c)
            .norm() /
        cnorm;
    result.gap = result.s.dot(result.z);
  };

  double best_merit = kInf;
  SolverResult best;
  int stall = 0;
  // Regularization escalates after a failed step and stays raised.
  double min_reg = 1e-15;

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const VectorXd hrx = prog.A.transpose() * y + prog.G.transpose() * z;
    const VectorXd hry = prog.A * x;
    const VectorXd hrz = prog.G * x + s;
    const VectorXd F1 = hrx + prog.c * tau;
    const VectorXd F2 = hry - prog.b * tau;
    const VectorXd F3 = hrz - prog.h * tau;
    const double cx = prog.c.dot(x);
    const double by = p ? prog.b.dot(y) : 0.0;
    const double hz = prog.h.dot(z);
    const double F4 = kappa + cx + by + hz;
    const double sz = s.dot(z);
    const double mu = (sz + tau * kappa) / (degree + 1.0);

    const double pres = std::max(p ? F2.norm() / bnorm : 0.0, F3.norm() / hnorm) / tau;
    const double dres = F1.norm() / cnorm / tau;
    const double pcost = cx / tau;
    const double dcost = -(by + hz) / tau;
    const double gap = sz / (tau * tau);
    const double relgap = std::abs(pcost - dcost) /
                          std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
    if (options.verbose) {
      std::fprintf(stderr,
                   "%3d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e "
                   "k/t %.2e |x| %.2e |z| %.2e\n",
                   iter, pcost, dcost, gap, pres, dres, kappa / tau,
                   x.norm() / tau, z.norm() / tau);
    }
    if (pres <= options.feastol && dres <= options.feastol &&
        (gap <= options.abstol || relgap <= options.reltol)) {
      record(SolveStatus::kOptimal, iter);
      return result;
    }
    // Infeasibility certificates.
    if (-(by + hz) > 0.0) {
      const double pinf = hrx.norm() / std::max(1.0, std::abs(by + hz)) ;
      if (hrx.norm() <= options.feastol * -(by + hz) && kappa > tau) {
        const double scale = -(by + hz);
        y /= scale;
        z /= scale;
        x.setZero();
        s.setZero();
        (void)pinf;
        record(SolveStatus::kPrimalInfeasible, iter);
        return result;
      }
    }
    if (-cx > 0.0) {
      const double nres = std::sqrt(hry.squaredNorm() + hrz.squaredNorm());
      if (nres <= options.feastol * -cx && kappa > tau) {
        x /= -cx;
        s /= -cx;
        y.setZero();
        z.setZero();
        record(SolveStatus::kDualInfeasible, iter);
        return result;
      }
    }
    const double merit = std::max({pres, dres, std::min(gap, relgap)});
    if (merit < best_merit) {
      best_merit = merit;
      record(SolveStatus::kMaxIterations, iter);
      best = result;
    }
    if (iter == options.max_iterations) break;

    std::optional<Scaling> scaling;
    std::optional<KktSolver> kkt;
    try {
      scaling.emplace(layout, s, z);
      kkt.emplace(prog, *scaling, min_reg);
    } catch (const std::runtime_error&) {
      break;
    }
    const VectorXd& lam = scaling->lambda();
    const VectorXd lam_sq = JordanProduct(layout, lam, lam);

    VectorXd vx, vy, vz;
    kkt->Solve(-prog.c, prog.b, prog.h, &vx, &vy, &vz);
    const double denom = prog.c.dot(vx) + (p ? prog.b.dot(vy) : 0.0) +
                         prog.h.dot(vz) - kappa / tau;

    VectorXd dx, dy, dz, ds, ws_a, wz_a;
    double dtau = 0.0, dkappa = 0.0, dtau_a = 0.0, dkappa_a = 0.0;
    double sigma = 0.0;
    double alpha = 0.0;
    bool failed = false;
    for (int phase = 0; phase < 2; ++phase) {
      VectorXd rs = -lam_sq;
      double rk = -tau * kappa;
      if (phase == 1) {
        rs += sigma * mu * e - JordanProduct(layout, ws_a, wz_a);
        rk += sigma * mu - dtau_a * dkappa_a;
      }
      const VectorXd lrs = scaling->LambdaDivide(rs);
      const double f = 1.0 - sigma;
      const VectorXd r1 = -f * F1;
      const VectorXd r2 = -f * F2;
      const VectorXd r3 = -f * F3 - scaling->Apply(Scaling::Op::kWT, lrs);
      const double r4 = -f * F4 - rk / tau;
      VectorXd ux, uy, uz;
      kkt->Solve(r1, r2, r3, &ux, &uy, &uz);
      dtau = (r4 - prog.c.dot(ux) - (p ? prog.b.dot(uy) : 0.0) - prog.h.dot(uz)) /
             denom;
      dx = ux + dtau * vx;
      dy = p ? VectorXd(uy + dtau * vy) : VectorXd();
      dz = uz + dtau * vz;
      const VectorXd wdz = scaling->Apply(Scaling::Op::kW, dz);
      const VectorXd wds = lrs - wdz;  // W^{-T} ds
      ds = scaling->Apply(Scaling::Op::kWT, wds);
      dkappa = (rk - kappa * dtau) / tau;
      if (!dx.allFinite() || !dz.allFinite() || !std::isfinite(dtau)) {
        failed = true;
        break;
      }
      double amax = std::min(MaxStep(layout, s, ds), MaxStep(layout, z, dz));
      if (dtau < 0.0) amax = std::min(amax, -tau / dtau);
      if (dkappa < 0.0) amax = std::min(amax, -kappa / dkappa);
      if (phase == 0) {
        const double alpha_a = std::min(1.0, amax);
        sigma = std::pow(1.0 - alpha_a, 3);
        sigma = std::clamp(sigma, 0.0, 1.0);
        ws_a = wds;
        wz_a = wdz;
        dtau_a = dtau;
        dkappa_a = dkappa;
      } else {
        alpha = std::min(1.0, 0.99 * amax);
      }
    }
    if (failed || alpha <= 1e-12) {
      if (min_reg < 1e-9) {
        min_reg *= 1e3;
        continue;
      }
      if (++stall >= 3) break;
      continue;
    }
    x += alpha * dx;
    if (p) y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
  }
  if (best.x.size() == 0) {
    record(SolveStatus::kNumericalFailure, options.max_iterations);
    return result;
  }
  // Report the best iterate; the caller decides whether its residuals are
  // acceptable.
  return best;
}

}  // namespace polyest::conic
