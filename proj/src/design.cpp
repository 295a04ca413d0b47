#include "polyest/design.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "polyest/cone_decomposition.hpp"
#include "polyest/errors.hpp"

namespace polyest {

using conic::LinExpr;
using conic::ProblemBuilder;
using conic::SymExpr;
using conic::SymVar;
using conic::VecVar;

namespace {

constexpr double kZeroNorm = 1e-12;
constexpr double kDuplicateCos = 1.0 - 1e-10;
constexpr double kZetaShift = 1e-9;
constexpr double kEigenFloor = 1e-12;

enum class ZetaNorm { kMax, kOne, kTwo };

ZetaNorm DualLossNorm(double theta) {
  if (std::abs(theta - 2.0) <= 1e-12) return ZetaNorm::kMax;
  if (std::abs(theta - 1.0) <= 1e-12) return ZetaNorm::kOne;
  if (std::abs(theta - 4.0 / 3.0) <= 1e-12) return ZetaNorm::kTwo;
  throw UnsupportedError("theta must be 1, 4/3 or 2 (got " +
                         std::to_string(theta) + ")");
}

double ZetaNormValue(const VectorXd& zeta, ZetaNorm kind) {
  if (zeta.size() == 0) return 0.0;
  switch (kind) {
    case ZetaNorm::kMax:
      return zeta.cwiseAbs().maxCoeff();
    case ZetaNorm::kOne:
      return zeta.cwiseAbs().sum();
    case ZetaNorm::kTwo:
      return zeta.norm();
  }
  return 0.0;
}

bool IsIdentity(const MatrixXd& M) {
  return M.rows() == M.cols() &&
         (M - MatrixXd::Identity(M.rows(), M.cols())).cwiseAbs().maxCoeff() ==
             0.0;
}

void RequireClosedForm(const MonotoneSet& set, const char* what) {
  if (set.kind() == MonotoneKind::kConicOracle) {
    throw UnsupportedError(std::string(what) + ": conic-oracle domain");
  }
}

VectorXd EvaluateAll(const std::vector<LinExpr>& e, const VectorXd& x) {
  VectorXd out(static_cast<int>(e.size()));
  for (size_t i = 0; i < e.size(); ++i) out(i) = e[i].Evaluate(x);
  return out;
}

// phi_T(v) for v >= 0, linear for the box.
LinExpr SupportOfNonnegative(ProblemBuilder& b, const MonotoneSet& set,
                             const std::vector<LinExpr>& v) {
  RequireClosedForm(set, "support function");
  const VectorXd& up = set.upper_bounds();
  if (set.kind() == MonotoneKind::kBox) {
    LinExpr total;
    for (size_t k = 0; k < v.size(); ++k) total += up(k) * v[k];
    return total;
  }
  const LinExpr t = b.AddScalar();
  b.AddNonnegative(t);
  for (size_t k = 0; k < v.size(); ++k) b.AddNonnegative(t - up(k) * v[k]);
  return t;
}

// Epigraph of phi_T(v) for v of any sign.
LinExpr SupportEpigraph(ProblemBuilder& b, const MonotoneSet& set,
                        const std::vector<LinExpr>& v) {
  RequireClosedForm(set, "support function");
  const VectorXd& up = set.upper_bounds();
  if (set.kind() == MonotoneKind::kBox) {
    LinExpr total;
    for (size_t k = 0; k < v.size(); ++k) {
      const LinExpr a = b.AddScalar();
      b.AddNonnegative(a);
      b.AddNonnegative(a - v[k]);
      total += up(k) * a;
    }
    return total;
  }
  const LinExpr t = b.AddScalar();
  b.AddNonnegative(t);
  for (size_t k = 0; k < v.size(); ++k) b.AddNonnegative(t - up(k) * v[k]);
  return t;
}

// pi_delta(g) <= r. With S_delta = I and a box domain the ball is an
// intersection of ellipsoids and each one is a plain second-order cone;
// otherwise the perspective of the ellitope description is used.
class NormEpigraph {
 public:
  explicit NormEpigraph(const NoiseNorm& norm) : norm_(norm) {
    RequireClosedForm(norm.domain(), "noise norm");
    direct_ = IsIdentity(norm.S_delta()) &&
              norm.domain().kind() == MonotoneKind::kBox;
    if (direct_) {
      for (const MatrixXd& S : norm.S_ell()) factors_.push_back(PsdFactor(S));
    }
  }

  void Add(ProblemBuilder& b, const std::vector<LinExpr>& g,
           const LinExpr& r) const {
    if (direct_) {
      const VectorXd& up = norm_.domain().upper_bounds();
      for (size_t l = 0; l < factors_.size(); ++l) {
        const MatrixXd& F = factors_[l];
        std::vector<LinExpr> u(F.rows());
        for (int i = 0; i < F.rows(); ++i) {
          for (int c = 0; c < F.cols(); ++c) {
            if (F(i, c) != 0.0) u[i] += F(i, c) * g[c];
          }
        }
        if (u.empty()) continue;
        if (up(l) == 0.0) {
          for (const LinExpr& e : u) b.AddEquality(e);
        } else if (u.size() == 1) {
          b.AddLinfBound(std::sqrt(up(l)) * r, u);
        } else {
          b.AddSecondOrderCone(std::sqrt(up(l)) * r, u);
        }
      }
      return;
    }
    const MatrixXd& Sd = norm_.S_delta();
    const VecVar z = b.AddVector(norm_.M());
    for (int i = 0; i < norm_.m(); ++i) {
      LinExpr e = g[i];
      for (int c = 0; c < norm_.M(); ++c) {
        if (Sd(i, c) != 0.0) e -= Sd(i, c) * z(c);
      }
      b.AddEquality(e);
    }
    const VecVar tau = b.AddVector(norm_.L());
    for (int l = 0; l < norm_.L(); ++l) {
      const MatrixXd& F = norm_.ball().ThinE(l);
      std::vector<LinExpr> u(F.rows() + 1);
      for (int i = 0; i < F.rows(); ++i) {
        for (int c = 0; c < F.cols(); ++c) {
          if (F(i, c) != 0.0) u[i] += F(i, c) * z(c);
        }
      }
      u.back() = r - tau(l);
      b.AddSecondOrderCone(r + tau(l), u);
    }
    norm_.domain().AddScaledMembership(b, Exprs(tau), r);
  }

 private:
  const NoiseNorm& norm_;
  bool direct_ = false;
  std::vector<MatrixXd> factors_;
};

// Dual certificate bounding max_{y in Ybar} d^T y.
struct YbarDualBlock {
  std::vector<LinExpr> beta;
  std::vector<LinExpr> eta;
  std::vector<VecVar> eps;
  VecVar phi;
  VecVar psi;
  LinExpr value;
};

YbarDualBlock AddYbarDual(ProblemBuilder& b, const Ellitope& e,
                          const PolytopeImage& poly,
                          const std::vector<LinExpr>& d, bool full_E) {
  const int K = e.K(), N = e.N(), n = e.n();
  YbarDualBlock out;
  out.phi = b.AddVector(K);
  out.psi = b.AddVector(K);
  std::vector<LinExpr> Ete(N);  // sum_k E_k^T eps_k
  for (int k = 0; k < K; ++k) {
    const MatrixXd F = full_E ? e.E(k) : e.ThinE(k);
    const VecVar eps = b.AddVector(static_cast<int>(F.rows()));
    out.eps.push_back(eps);
    for (int c = 0; c < N; ++c) {
      for (int r = 0; r < F.rows(); ++r) {
        if (F(r, c) != 0.0) Ete[c].AddTerm(eps.offset + r, F(r, c));
      }
    }
    std::vector<LinExpr> u = Exprs(eps);
    u.push_back(out.phi(k));
    b.AddSecondOrderCone(out.psi(k), u);
  }
  if (e.p_is_identity()) {
    for (int i = 0; i < n; ++i) out.eta.push_back(-Ete[i]);
  } else {
    const VecVar eta = b.AddVector(n);
    out.eta = Exprs(eta);
    const MatrixXd& P = e.P();
    for (int c = 0; c < N; ++c) {
      LinExpr row = Ete[c];
      for (int i = 0; i < n; ++i) {
        if (P(i, c) != 0.0) row += P(i, c) * out.eta[i];
      }
      b.AddEquality(row);
    }
  }
  const MatrixXd& R = poly.R();
  const MatrixXd& Q = poly.Q();
  std::vector<LinExpr> Rt_eta(poly.q());
  for (int a = 0; a < poly.q(); ++a) {
    for (int i = 0; i < n; ++i) {
      if (R(i, a) != 0.0) Rt_eta[a] += R(i, a) * out.eta[i];
    }
  }
  if (poly.p() == poly.q()) {
    // Q is invertible: beta = Q^{-T} R^T eta.
    const MatrixXd& Qinv = poly.Q_pinv();
    out.beta.assign(poly.p(), LinExpr());
    for (int r = 0; r < poly.p(); ++r) {
      for (int a = 0; a < poly.q(); ++a) {
        if (Qinv(a, r) != 0.0) out.beta[r] += Qinv(a, r) * Rt_eta[a];
      }
    }
  } else {
    const VecVar beta = b.AddVector(poly.p());
    out.beta = Exprs(beta);
    for (int a = 0; a < poly.q(); ++a) {
      LinExpr row = Rt_eta[a];
      for (int r = 0; r < poly.p(); ++r) {
        if (Q(r, a) != 0.0) row -= Q(r, a) * out.beta[r];
      }
      b.AddEquality(row);
    }
  }
  const MatrixXd& V = poly.V();
  std::vector<LinExpr> w(poly.J());
  for (int j = 0; j < poly.J(); ++j) {
    for (int r = 0; r < poly.p(); ++r) {
      if (V(r, j) != 0.0) w[j] += V(r, j) * (d[r] - out.beta[r]);
    }
  }
  const LinExpr t = b.AddScalar();
  b.AddLinfBound(t, w);
  std::vector<LinExpr> sum(K);
  LinExpr value = t;
  for (int k = 0; k < K; ++k) {
    value += out.psi(k) - out.phi(k);
    sum[k] = out.phi(k) + out.psi(k);
  }
  value += SupportEpigraph(b, e.domain(), sum);
  out.value = value;
  return out;
}

// Maps thin-factor multipliers to the N-dimensional E_k form: with
// E_k = V_r F_k, eps = E_k^+ F_k^T eps' has the same image and norm.
std::vector<MatrixXd> ThinToFull(const Ellitope& e) {
  std::vector<MatrixXd> out;
  for (int k = 0; k < e.K(); ++k) {
    out.push_back(PseudoInverse(e.E(k)) * e.ThinE(k).transpose());
  }
  return out;
}

PolytopeDual ExtractDual(const YbarDualBlock& block, const VectorXd& x,
                         const std::vector<MatrixXd>& lift) {
  PolytopeDual out;
  out.beta = EvaluateAll(block.beta, x);
  out.eta = EvaluateAll(block.eta, x);
  for (size_t k = 0; k < block.eps.size(); ++k) {
    out.eps.push_back(lift[k] * block.eps[k].Value(x));
  }
  out.phi = block.phi.Value(x);
  out.psi = block.psi.Value(x);
  return out;
}

// C^T X C for a symmetric variable X (C is r x c).
SymExpr Congruence(const SymVar& X, const MatrixXd& C) {
  const int d = static_cast<int>(C.cols());
  SymExpr out(d);
  for (int b = 0; b < d; ++b) {
    for (int a = b; a < d; ++a) {
      LinExpr& e = out.at(a, b);
      for (int j = 0; j < X.dim; ++j) {
        for (int i = j; i < X.dim; ++i) {
          const double coef = i == j ? C(i, a) * C(i, b)
                                     : C(i, a) * C(j, b) + C(j, a) * C(i, b);
          if (coef != 0.0) e.AddTerm(X.index(i, j), coef);
        }
      }
    }
  }
  return out;
}

LinExpr TraceWith(const SymVar& X, const MatrixXd& W) {
  LinExpr e;
  for (int j = 0; j < X.dim; ++j) {
    for (int i = j; i < X.dim; ++i) {
      const double coef = i == j ? W(i, i) : W(i, j) + W(j, i);
      if (coef != 0.0) e.AddTerm(X.index(i, j), coef);
    }
  }
  return e;
}

// Loss LMI [[U + S, B^T], [B, Diag zeta]] >= 0 with ||zeta||_{theta*} <= 1.
// Returns the zeta expressions (constant 1 for theta = 2).
std::vector<LinExpr> AddLossLmi(ProblemBuilder& b, const SymExpr& US,
                                const MatrixXd& B, ZetaNorm kind) {
  const int n = US.dim(), nu = static_cast<int>(B.rows());
  std::vector<LinExpr> zeta;
  if (kind == ZetaNorm::kMax) {
    // With every zeta_i = 1 the LMI is U + S >= B^T B.
    b.AddPsd(US - SymExpr::Constant(B.transpose() * B));
    zeta.assign(nu, LinExpr(1.0));
    return zeta;
  }
  const VecVar z = b.AddVector(nu);
  zeta = Exprs(z);
  SymExpr big(n + nu);
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) big.at(i, j) = US.at(i, j);
  }
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < n; ++j) big.at(n + i, j) = LinExpr(B(i, j));
    big.at(n + i, n + i) = zeta[i];
  }
  b.AddPsd(big);
  if (kind == ZetaNorm::kOne) {
    LinExpr budget(1.0);
    for (const LinExpr& e : zeta) budget -= e;
    b.AddNonnegative(budget);
  } else {
    b.AddSecondOrderCone(LinExpr(1.0), zeta);
  }
  return zeta;
}

bool NearOptimal(const conic::SolverResult& r) {
  if (r.ok()) return true;
  if (r.status != conic::SolveStatus::kMaxIterations) return false;
  const double scale = std::max(1.0, std::abs(r.primal_objective));
  return r.primal_residual <= 1e-6 && r.dual_residual <= 1e-6 &&
         std::abs(r.primal_objective - r.dual_objective) <= 1e-6 * scale;
}

void CopyDiagnostics(const conic::SolverResult& r, DesignSolution& sol) {
  sol.status = r.status;
  sol.primal_residual = r.primal_residual;
  sol.dual_residual = r.dual_residual;
  sol.gap = r.gap;
  sol.iterations = r.iterations;
}

// [Q^+]^T R^T S R Q^+ v as affine expressions of the symmetric variable S.
std::vector<LinExpr> SbarTimes(const SymVar& S, const MatrixXd& Cp,
                               const VectorXd& v) {
  const VectorXd u = Cp * v;
  const int n = static_cast<int>(Cp.rows());
  std::vector<LinExpr> out(Cp.cols());
  for (int r = 0; r < Cp.cols(); ++r) {
    for (int a = 0; a < n; ++a) {
      if (Cp(a, r) == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        if (u(c) != 0.0) out[r].AddTerm(S.index(a, c), Cp(a, r) * u(c));
      }
    }
  }
  return out;
}

// Cleans interior-point round-off on the ellitope side so that the
// decomposition step sees an exact cone member. Xi is projected onto the PSD
// cone; rho is raised to the smallest value certified by Xi; spectral mass of
// Theta below kDropRatio * lambda_max (or all of it, when rho is negligible)
// is removed and covered instead by gamma, using
// P^T A^T Theta A P <= lambda I <= (lambda / lambda_min(sum T_k)) sum T_k.
void RepairEllitopeSide(const DesignProblem& problem, DesignSolution& sol) {
  constexpr double kDropRatio = 1e-9;
  if (sol.mode == DesignMode::kPolytopeOnly) return;
  const NoiseNorm& norm = problem.norm;
  const Ellitope& ell = problem.X.ellitope;
  const MatrixXd& Sd = norm.S_delta();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Symmetrize(sol.Xi));
  VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  const double lam_max = lam.size() ? lam.maxCoeff() : 0.0;
  const double scale = std::max(1.0, std::abs(sol.objective));
  MatrixXd dropped = MatrixXd::Zero(norm.M(), norm.M());
  const bool euclidean = norm.kind() == NoiseKind::kEuclideanBall;
  const double c2 = euclidean ? std::pow(norm.euclidean_scale(), 2) : 0.0;
  const bool negligible =
      euclidean ? c2 * (Sd * lam.asDiagonal() * Sd.transpose()).trace() <=
                      kDropRatio * scale
                : sol.rho <= kDropRatio * scale;
  for (int i = 0; i < lam.size(); ++i) {
    if (negligible || (euclidean && lam(i) <= kDropRatio * lam_max)) {
      dropped += std::max(eig.eigenvalues()(i), 0.0) *
                 eig.eigenvectors().col(i) *
                 eig.eigenvectors().col(i).transpose();
      lam(i) = 0.0;
    }
  }
  sol.Xi = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
  sol.Theta = Sd * sol.Xi * Sd.transpose();
  if (euclidean) {
    sol.rho = c2 * sol.Theta.trace();
  } else if (negligible) {
    sol.rho = 0.0;
  } else {
    const MonotoneSet& dom = norm.domain();
    const VectorXd& up = dom.upper_bounds();
    double need = 0.0;
    for (int l = 0; l < norm.L(); ++l) {
      const double r =
          sol.kappa * sol.Xi.cwiseProduct(norm.S_ell()[l]).sum() / up(l);
      need = dom.kind() == MonotoneKind::kBox ? std::max(need, r) : need + r;
    }
    sol.rho = std::max({sol.rho, need, 0.0});
  }
  if (dropped.cwiseAbs().maxCoeff() > 0.0) {
    const MatrixXd C = Sd.transpose() * problem.A * ell.P();
    const double top = MaxEigenvalue(C.transpose() * dropped * C);
    MatrixXd sumT = MatrixXd::Zero(ell.N(), ell.N());
    for (const MatrixXd& T : ell.T()) sumT += T;
    sol.gamma.array() += std::max(top, 0.0) / MinEigenvalue(sumT);
  }
  sol.gamma = sol.gamma.cwiseMax(0.0);
  sol.phi_gamma = SupportFunction(ell.domain(), sol.gamma);
  sol.objective = sol.phi_gamma + sol.rho + sol.varsigma;
}

void EnsureVerified(const DesignProblem& problem, const DesignSolution& sol,
                    double tol) {
  const DesignVerification report = VerifyDesign(problem, sol, tol);
  if (!report.ok()) {
    throw DesignError("design solution failed verification: " +
                      report.Summary());
  }
}

}  // namespace

// ----------------------------------------------------------------- problem

void DesignProblem::Validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("DesignProblem: " + what);
  };
  if (A.cols() != X.n()) fail("A must have n columns");
  if (A.rows() != norm.m()) fail("A must have m = norm.m() rows");
  if (B.cols() != X.n()) fail("B must have n columns");
  if (B.rows() < 1) fail("B must have at least one row");
  if (X.polytope.n() != X.n()) fail("polytope and ellitope disagree on n");
  RequireClosedForm(X.ellitope.domain(), "signal ellitope");
  RequireClosedForm(norm.domain(), "noise norm");
  DualLossNorm(theta);
}

const char* ToString(DesignMode mode) {
  switch (mode) {
    case DesignMode::kFull:
      return "full";
    case DesignMode::kEllitopeOnly:
      return "ellitope-only";
    case DesignMode::kPolytopeOnly:
      return "polytope-only";
  }
  return "?";
}

DesignMode ParseDesignMode(const std::string& name) {
  if (name == "full") return DesignMode::kFull;
  if (name == "ellitope-only") return DesignMode::kEllitopeOnly;
  if (name == "polytope-only") return DesignMode::kPolytopeOnly;
  throw std::invalid_argument("unknown design mode: " + name);
}

conic::ConicSolver DefaultDesignSolver() {
  conic::SolverOptions opts;
  opts.feastol = 1e-8;
  opts.abstol = 1e-8;
  opts.reltol = 1e-8;
  opts.max_iterations = 200;
  return conic::ConicSolver(opts);
}

// ------------------------------------------------------------ verification

std::string DesignVerification::Summary() const {
  std::ostringstream os;
  os << (ok() ? "ok" : "FAILED") << " (worst " << worst << ")";
  for (const std::string& f : failures) os << "; " << f;
  return os.str();
}

DesignVerification VerifyDesign(const DesignProblem& problem,
                                const DesignSolution& sol, double tol) {
  DesignVerification report;
  auto check = [&](const std::string& name, double violation, double scale,
                   double factor = 1.0) {
    const double rel = violation / std::max(1.0, scale) / factor;
    report.worst = std::max(report.worst, rel);
    if (!(rel <= tol)) {
      std::ostringstream os;
      os << name << " violated by " << violation;
      report.failures.push_back(os.str());
    }
  };
  const Ellitope& ell = problem.X.ellitope;
  const PolytopeImage& poly = problem.X.polytope;
  const NoiseNorm& norm = problem.norm;
  const int n = problem.n(), nu = problem.nu(), K = ell.K();
  const ZetaNorm zkind = DualLossNorm(sol.theta);

  // Loss LMI, in the limit form zeta + shift.
  const MatrixXd US = sol.U + sol.S;
  if (zkind == ZetaNorm::kMax) {
    const MatrixXd BtB = problem.B.transpose() * problem.B;
    check("U + S >= B^T B", -MinEigenvalue(US - BtB),
          US.norm() + BtB.norm());
  } else {
    MatrixXd big(n + nu, n + nu);
    big << US, problem.B.transpose(), problem.B,
        (sol.zeta.array() + kZetaShift).matrix().asDiagonal().toDenseMatrix();
    check("loss LMI", -MinEigenvalue(big), big.norm());
  }
  check("||zeta||_theta* <= 1", ZetaNormValue(sol.zeta, zkind) - 1.0, 1.0);
  if (sol.zeta.size()) check("zeta >= 0", -sol.zeta.minCoeff(), 1.0);

  // (Theta, rho) in the cone.
  check("Xi >= 0", -MinEigenvalue(sol.Xi), sol.Xi.norm());
  const MatrixXd ThetaFromXi =
      norm.S_delta() * sol.Xi * norm.S_delta().transpose();
  check("Theta = S_delta Xi S_delta^T", (ThetaFromXi - sol.Theta).norm(),
        sol.Theta.norm());
  if (norm.kind() == NoiseKind::kEuclideanBall) {
    const double c = norm.euclidean_scale();
    check("rho = (sigma q)^2 Tr Theta",
          std::abs(sol.rho - c * c * sol.Theta.trace()), sol.rho);
  } else {
    const bool member =
        ConeCheck(norm, sol.Xi, sol.rho, tol, sol.kappa).has_value();
    check("(Xi, rho) in cone", member ? 0.0 : 1.0, 0.0);
  }
  check("rho >= 0", -sol.rho, 1.0);
  if (sol.gamma.size() != K) {
    report.failures.push_back("gamma has wrong length");
    return report;
  }
  check("gamma >= 0", -sol.gamma.minCoeff(), 1.0);

  // P^T U P <= P^T A^T Theta A P + sum gamma_k T_k.
  const MatrixXd& P = ell.P();
  const MatrixXd APt = problem.A * P;
  MatrixXd rhs = APt.transpose() * sol.Theta * APt;
  MatrixXd gT = MatrixXd::Zero(ell.N(), ell.N());
  for (int k = 0; k < K; ++k) gT += sol.gamma(k) * ell.T()[k];
  const MatrixXd PUP = P.transpose() * sol.U * P;
  check("P^T U P <= P^T A^T Theta A P + sum gamma T",
        -MinEigenvalue(rhs + gT - PUP), rhs.norm() + gT.norm() + PUP.norm());

  // Polytope side.
  if (sol.mode == DesignMode::kEllitopeOnly) {
    check("varsigma = 0 (ellitope-only)", std::abs(sol.varsigma), 0.0);
  } else {
    if (static_cast<int>(sol.g.size()) != poly.J() ||
        static_cast<int>(sol.duals.size()) != poly.J()) {
      report.failures.push_back("g / duals have wrong count");
      return report;
    }
    const MatrixXd Sbar = SbarMatrix(sol.S, poly);
    const MatrixXd D = (problem.A * poly.R() * poly.Q_pinv()).transpose();
    for (int j = 0; j < poly.J(); ++j) {
      const PolytopeDual& du = sol.duals[j];
      const std::string tag = " (j=" + std::to_string(j) + ")";
      const VectorXd eq1 =
          poly.R().transpose() * du.eta - poly.Q().transpose() * du.beta;
      check("R^T eta - Q^T beta = 0" + tag, eq1.cwiseAbs().maxCoeff(),
            du.eta.norm() + du.beta.norm());
      VectorXd eq2 = P.transpose() * du.eta;
      double eps_scale = 0.0;
      for (int k = 0; k < K; ++k) {
        eq2 += ell.E(k).transpose() * du.eps[k];
        eps_scale += du.eps[k].norm();
        const double lhs =
            std::sqrt(du.eps[k].squaredNorm() + du.phi(k) * du.phi(k));
        check("psi >= ||[eps; phi]||" + tag, lhs - du.psi(k), du.psi(k));
      }
      check("sum E^T eps + P^T eta = 0" + tag, eq2.cwiseAbs().maxCoeff(),
            eps_scale + du.eta.norm());
      const VectorXd d = Sbar * poly.V().col(j) - D * sol.g[j];
      const double linf =
          (poly.V().transpose() * (d - du.beta)).cwiseAbs().maxCoeff();
      const double lhs = linf + (du.psi - du.phi).sum() +
                         SupportFunction(ell.domain(), du.phi + du.psi) +
                         norm.Evaluate(sol.g[j]);
      check("polytope-side bound <= varsigma" + tag, lhs - sol.varsigma,
            std::abs(sol.varsigma) + std::abs(lhs));
    }
  }
  if (sol.mode == DesignMode::kPolytopeOnly) {
    check("U = 0 (polytope-only)", sol.U.norm(), 0.0);
    check("Theta = 0 (polytope-only)", sol.Theta.norm(), 0.0);
  }
  const double phi = SupportFunction(ell.domain(), sol.gamma);
  check("phi_T(gamma) consistent", std::abs(phi - sol.phi_gamma), phi);
  check("objective = phi_T(gamma) + rho + varsigma",
        std::abs(sol.objective - (phi + sol.rho + sol.varsigma)),
        std::abs(sol.objective));
  // Tightness only: the repair may raise the objective by a multiple of the
  // accepted solver residual without affecting validity.
  check("objective close to the solver optimum",
        std::abs(sol.objective - sol.solver_objective),
        std::abs(sol.solver_objective), 10.0);
  return report;
}

// ----------------------------------------------------------------- master

DesignSolution SolveMaster(const DesignProblem& problem,
                           const DesignOptions& options) {
  problem.Validate();
  const Ellitope& ell = problem.X.ellitope;
  const PolytopeImage& poly = problem.X.polytope;
  const NoiseNorm& norm = problem.norm;
  const int n = problem.n(), m = problem.m(), K = ell.K();
  const ZetaNorm zkind = DualLossNorm(problem.theta);
  const bool use_ellitope = options.mode != DesignMode::kPolytopeOnly;
  const bool use_polytope = options.mode != DesignMode::kEllitopeOnly;
  const bool euclidean = norm.kind() == NoiseKind::kEuclideanBall;

  ProblemBuilder b;
  SymExpr Uexpr(n), Sexpr(n);
  SymVar U, S, Xi;
  VecVar gamma;
  LinExpr rho, varsigma, phi_gamma;
  if (use_ellitope) {
    U = b.AddSymmetric(n);
    Uexpr = U.expr();
    Xi = b.AddSymmetric(norm.M());
    b.AddPsd(Xi.expr());
    gamma = b.AddVector(K);
    for (int k = 0; k < K; ++k) b.AddNonnegative(gamma(k));
    phi_gamma = SupportOfNonnegative(b, ell.domain(), Exprs(gamma));
    const MatrixXd& Sd = norm.S_delta();
    if (euclidean) {
      const double c = norm.euclidean_scale();
      rho = c * c * TraceWith(Xi, Sd.transpose() * Sd);
    } else {
      const double kappa = KappaConst(norm.M(), norm.L());
      rho = b.AddScalar();
      b.AddNonnegative(rho);
      const MonotoneSet& dom = norm.domain();
      if (dom.kind() == MonotoneKind::kBox) {
        for (int l = 0; l < norm.L(); ++l) {
          b.AddNonnegative((dom.upper_bounds()(l) / kappa) * rho -
                           TraceWith(Xi, norm.S_ell()[l]));
        }
      } else {
        const VecVar tau = b.AddVector(norm.L());
        for (int l = 0; l < norm.L(); ++l) {
          b.AddNonnegative(tau(l) - TraceWith(Xi, norm.S_ell()[l]));
        }
        dom.AddScaledMembership(b, Exprs(tau), (1.0 / kappa) * rho);
      }
    }
    // P^T A^T Theta A P + sum gamma_k T_k - P^T U P >= 0.
    const MatrixXd C = Sd.transpose() * problem.A * ell.P();
    SymExpr W = Congruence(Xi, C);
    for (int k = 0; k < K; ++k) {
      const MatrixXd& T = ell.T()[k];
      for (int c = 0; c < ell.N(); ++c) {
        for (int r = c; r < ell.N(); ++r) {
          if (T(r, c) != 0.0) W.at(r, c) += T(r, c) * gamma(k);
        }
      }
    }
    if (ell.p_is_identity()) {
      W -= Uexpr;
    } else {
      W -= Congruence(U, ell.P());
    }
    b.AddPsd(W);
  }
  if (use_polytope) {
    S = b.AddSymmetric(n);
    Sexpr = S.expr();
  }
  const std::vector<LinExpr> zeta =
      AddLossLmi(b, Uexpr + Sexpr, problem.B, zkind);

  std::vector<VecVar> g;
  std::vector<YbarDualBlock> blocks;
  if (use_polytope) {
    varsigma = b.AddScalar();
    const NormEpigraph pi(norm);
    const MatrixXd Cp = poly.R() * poly.Q_pinv();
    const MatrixXd D = (problem.A * Cp).transpose();
    for (int j = 0; j < poly.J(); ++j) {
      const VecVar gj = b.AddVector(m);
      g.push_back(gj);
      std::vector<LinExpr> d = SbarTimes(S, Cp, poly.V().col(j));
      for (int r = 0; r < poly.p(); ++r) {
        for (int i = 0; i < m; ++i) {
          if (D(r, i) != 0.0) d[r] -= D(r, i) * gj(i);
        }
      }
      blocks.push_back(AddYbarDual(b, ell, poly, d, false));
      const LinExpr r = b.AddScalar();
      pi.Add(b, Exprs(gj), r);
      b.AddNonnegative(varsigma - blocks.back().value - r);
    }
  }
  b.Minimize(phi_gamma + rho + varsigma);

  const conic::SolverResult res = options.solver.Solve(b.Build());
  if (!NearOptimal(res)) throw SolverError("SolveMaster", res);
  const VectorXd& x = res.x;

  DesignSolution sol;
  sol.mode = options.mode;
  sol.theta = problem.theta;
  CopyDiagnostics(res, sol);
  sol.U = use_ellitope ? U.Value(x) : MatrixXd::Zero(n, n);
  sol.S = use_polytope ? S.Value(x) : MatrixXd::Zero(n, n);
  sol.Xi = use_ellitope ? Xi.Value(x) : MatrixXd::Zero(norm.M(), norm.M());
  sol.Theta = norm.S_delta() * sol.Xi * norm.S_delta().transpose();
  sol.gamma = use_ellitope ? gamma.Value(x) : VectorXd::Zero(K);
  sol.rho = rho.Evaluate(x);
  sol.varsigma = varsigma.Evaluate(x);
  sol.kappa = euclidean ? 1.0 : KappaConst(norm.M(), norm.L());
  sol.zeta = EvaluateAll(zeta, x);
  const std::vector<MatrixXd> lift = ThinToFull(ell);
  for (size_t j = 0; j < g.size(); ++j) {
    sol.g.push_back(g[j].Value(x));
    sol.duals.push_back(ExtractDual(blocks[j], x, lift));
  }
  sol.phi_gamma = SupportFunction(ell.domain(), sol.gamma);
  sol.solver_objective = res.primal_objective + b.objective_offset();
  sol.objective = sol.solver_objective;
  RepairEllitopeSide(problem, sol);
  EnsureVerified(problem, sol, options.verify_tol);
  return sol;
}

// --------------------------------------------------------------- Gaussian

DesignProblem GaussianL1Problem::ToDesignProblem() const {
  const int n = static_cast<int>(A.cols());
  SignalSet X{Ellitope::BallBox(n, rho2, rho_inf),
              PolytopeImage::L1Ball(n, rho1), {}};
  return DesignProblem{std::move(X), A, B, norm, 2.0};
}

DesignSolution SolveMasterGaussian(const GaussianL1Problem& gp,
                                   const DesignOptions& options) {
  if (gp.norm.kind() != NoiseKind::kEuclideanBall) {
    throw std::invalid_argument(
        "SolveMasterGaussian: noise norm must be of Euclidean-ball kind");
  }
  const DesignProblem problem = gp.ToDesignProblem();
  problem.Validate();
  const int n = problem.n(), m = problem.m();
  const double c = gp.norm.euclidean_scale();
  const bool use_ellitope = options.mode != DesignMode::kPolytopeOnly;
  const bool use_polytope = options.mode != DesignMode::kEllitopeOnly;

  ProblemBuilder b;
  SymExpr Uexpr(n), Sexpr(n);
  SymVar U, S, Theta;
  VecVar gamma;
  LinExpr objective;
  if (use_ellitope) {
    U = b.AddSymmetric(n);
    Uexpr = U.expr();
    Theta = b.AddSymmetric(m);
    b.AddPsd(Theta.expr());
    gamma = b.AddVector(n + 1);
    for (int k = 0; k <= n; ++k) {
      b.AddNonnegative(gamma(k));
      objective += gamma(k);
    }
    objective += c * c * TraceWith(Theta, MatrixXd::Identity(m, m));
    SymExpr W = Congruence(Theta, gp.A);
    for (int i = 0; i < n; ++i) {
      W.at(i, i) += (1.0 / (gp.rho2 * gp.rho2)) * gamma(0) +
                    (1.0 / (gp.rho_inf * gp.rho_inf)) * gamma(i + 1);
    }
    W -= Uexpr;
    b.AddPsd(W);
  }
  if (use_polytope) {
    S = b.AddSymmetric(n);
    Sexpr = S.expr();
  }
  b.AddPsd(Uexpr + Sexpr - SymExpr::Constant(gp.B.transpose() * gp.B));

  LinExpr varsigma;
  std::vector<VecVar> g, alpha, beta;
  if (use_polytope) {
    varsigma = b.AddScalar();
    objective += varsigma;
    for (int j = 0; j < n; ++j) {
      g.push_back(b.AddVector(m));
      alpha.push_back(b.AddVector(n));
      beta.push_back(b.AddVector(n));
      std::vector<LinExpr> w(n);
      for (int i = 0; i < n; ++i) {
        w[i] = gp.rho1 * S(i, j) - alpha[j](i) - beta[j](i);
        for (int k = 0; k < m; ++k) {
          if (gp.A(k, i) != 0.0) w[i] -= gp.A(k, i) * g[j](k);
        }
      }
      const LinExpr t = b.AddScalar(), a = b.AddScalar(), bb = b.AddScalar(),
                    r = b.AddScalar();
      b.AddLinfBound(t, w);
      b.AddL1Bound(a, Exprs(alpha[j]));
      b.AddSecondOrderCone(bb, Exprs(beta[j]));
      b.AddSecondOrderCone(r, Exprs(g[j]));
      b.AddNonnegative(varsigma - gp.rho1 * t - gp.rho_inf * a - gp.rho2 * bb -
                       c * r);
    }
  }
  b.Minimize(objective);

  const conic::SolverResult res = options.solver.Solve(b.Build());
  if (!NearOptimal(res)) throw SolverError("SolveMasterGaussian", res);
  const VectorXd& x = res.x;

  DesignSolution sol;
  sol.mode = options.mode;
  sol.theta = 2.0;
  CopyDiagnostics(res, sol);
  sol.U = use_ellitope ? U.Value(x) : MatrixXd::Zero(n, n);
  sol.S = use_polytope ? S.Value(x) : MatrixXd::Zero(n, n);
  sol.Theta = use_ellitope ? Theta.Value(x) : MatrixXd::Zero(m, m);
  sol.Xi = sol.Theta;
  sol.kappa = 1.0;
  sol.rho = c * c * sol.Theta.trace();
  sol.gamma = use_ellitope ? gamma.Value(x) : VectorXd::Zero(n + 1);
  sol.zeta = VectorXd::Ones(problem.nu());
  sol.varsigma = varsigma.Evaluate(x);
  // General-form multipliers: eta = beta^j = alpha_j + beta_j, split over
  // E_1 = (2 / rho2) I and E_{i+1} = (2 / rho_inf) e_i e_i^T.
  for (size_t j = 0; j < g.size(); ++j) {
    sol.g.push_back(g[j].Value(x));
    sol.alpha.push_back(alpha[j].Value(x));
    sol.beta_ball.push_back(beta[j].Value(x));
    PolytopeDual du;
    du.eta = sol.alpha[j] + sol.beta_ball[j];
    du.beta = du.eta;
    du.eps.push_back(-0.5 * gp.rho2 * sol.beta_ball[j]);
    for (int i = 0; i < n; ++i) {
      VectorXd e = VectorXd::Zero(n);
      e(i) = -0.5 * gp.rho_inf * sol.alpha[j](i);
      du.eps.push_back(std::move(e));
    }
    du.phi = VectorXd::Zero(n + 1);
    du.psi.resize(n + 1);
    for (int k = 0; k <= n; ++k) du.psi(k) = du.eps[k].norm();
    sol.duals.push_back(std::move(du));
  }
  sol.phi_gamma = sol.gamma.sum();
  sol.solver_objective = res.primal_objective + b.objective_offset();
  sol.objective = sol.solver_objective;
  RepairEllitopeSide(problem, sol);
  EnsureVerified(problem, sol, options.verify_tol);
  return sol;
}

// --------------------------------------------------------------- contrasts

ContrastMatrix AssembleEllitopeContrast(const DesignSolution& solution,
                                        const NoiseNorm& norm,
                                        std::mt19937_64& rng) {
  const int m = norm.m();
  if (solution.Theta.rows() != m) {
    throw std::invalid_argument("AssembleEllitopeContrast: Theta is not m x m");
  }
  if (solution.rho <= 0.0 || solution.Theta.cwiseAbs().maxCoeff() == 0.0) {
    return ContrastMatrix::Empty(m, norm.delta());
  }
  if (norm.kind() == NoiseKind::kEuclideanBall) {
    const double c = norm.euclidean_scale();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Symmetrize(solution.Theta));
    const VectorXd& lam = eig.eigenvalues();
    const double cutoff = kEigenFloor * std::max(1.0, lam.maxCoeff());
    ContrastMatrix out = ContrastMatrix::Empty(m, norm.delta());
    std::vector<int> kept;
    for (int i = m - 1; i >= 0; --i) {
      if (lam(i) > cutoff) kept.push_back(i);
    }
    out.H.resize(m, static_cast<int>(kept.size()));
    out.weights.resize(static_cast<int>(kept.size()));
    for (size_t t = 0; t < kept.size(); ++t) {
      out.H.col(t) = eig.eigenvectors().col(kept[t]) / c;
      out.weights(t) = c * c * lam(kept[t]);
      out.provenance.push_back(ColumnSide::kEllitope);
    }
    return out;
  }
  const RankOneDecomposition d =
      ExtractRankOne(norm, solution.Xi, solution.rho, rng);
  return LiftToContrasts(d, norm);
}

ContrastMatrix AssemblePolytopeContrast(const DesignSolution& solution,
                                        const NoiseNorm& norm) {
  const int m = norm.m();
  std::vector<VectorXd> cols;
  for (const VectorXd& g : solution.g) {
    const double pi = norm.Evaluate(g);
    if (pi <= kZeroNorm) continue;
    cols.push_back(g / pi);
  }
  ContrastMatrix out = ContrastMatrix::Empty(m, norm.delta());
  out.H = StackColumns(cols, m);
  out.weights = VectorXd::Zero(static_cast<int>(cols.size()));
  out.provenance.assign(cols.size(), ColumnSide::kPolytope);
  return out;
}

ContrastMatrix PruneContrast(const ContrastMatrix& H, const NoiseNorm& norm) {
  std::vector<VectorXd> cols;
  std::vector<double> pis;
  std::vector<double> weights;
  std::vector<ColumnSide> sides;
  for (int j = 0; j < H.cols(); ++j) {
    const VectorXd h = H.H.col(j);
    const double pi = norm.Evaluate(h);
    if (pi < kZeroNorm) continue;
    bool merged = false;
    for (size_t k = 0; k < cols.size(); ++k) {
      const double cosine =
          std::abs(h.dot(cols[k])) / (h.norm() * cols[k].norm());
      if (cosine <= kDuplicateCos) continue;
      // Keep the longer of the two so folded weights never grow.
      if (pi > pis[k]) {
        const double r = cols[k].norm() / h.norm();
        weights[k] = weights[k] * r * r + H.weights(j);
        cols[k] = h;
        pis[k] = pi;
      } else {
        const double r = h.norm() / cols[k].norm();
        weights[k] += H.weights(j) * r * r;
      }
      merged = true;
      break;
    }
    if (merged) continue;
    cols.push_back(h);
    pis.push_back(pi);
    weights.push_back(H.weights(j));
    sides.push_back(H.provenance[j]);
  }
  ContrastMatrix out = ContrastMatrix::Empty(H.rows(), H.delta);
  out.H = StackColumns(cols, H.rows());
  out.weights = Eigen::Map<const VectorXd>(weights.data(),
                                           static_cast<int>(weights.size()));
  out.provenance = sides;
  return out;
}

ContrastMatrix AssembleContrast(const DesignSolution& solution,
                                const NoiseNorm& norm, std::mt19937_64& rng) {
  return PruneContrast(
      ContrastMatrix::Concat(AssembleEllitopeContrast(solution, norm, rng),
                             AssemblePolytopeContrast(solution, norm)),
      norm);
}

CertifiedRisk ComputeCertifiedRisk(const DesignSolution& solution, int M_cols,
                                   int J_cols, double delta) {
  if (M_cols < 0 || J_cols < 0 || !(delta >= 0.0)) {
    throw std::invalid_argument("ComputeCertifiedRisk: bad arguments");
  }
  CertifiedRisk out;
  out.epsilon = (M_cols + J_cols) * delta;
  out.bound = 2.0 * std::sqrt(std::max(0.0, solution.radicand()));
  return out;
}

// ----------------------------------------------------------- Ybar duality

YbarValue DualMaxOverYbar(const Eigen::Ref<const VectorXd>& d,
                          const Ellitope& ellitope,
                          const PolytopeImage& polytope, bool full_E,
                          const conic::ConicSolver& solver) {
  if (d.size() != polytope.p() || ellitope.n() != polytope.n()) {
    throw std::invalid_argument("DualMaxOverYbar: dimension mismatch");
  }
  YbarValue out;
  {
    // y = V lambda, ||lambda||_1 <= 1, V lambda in range Q, R Q^+ y in the
    // ellitope.
    ProblemBuilder b;
    const VecVar lambda = b.AddVector(polytope.J());
    b.AddL1Bound(LinExpr(1.0), Exprs(lambda));
    const MatrixXd& V = polytope.V();
    const MatrixXd off_range =
        (MatrixXd::Identity(polytope.p(), polytope.p()) -
         polytope.Q() * polytope.Q_pinv()) * V;
    const MatrixXd rows = RowSpaceBasis(off_range);
    for (int r = 0; r < rows.rows(); ++r) {
      LinExpr e;
      for (int j = 0; j < polytope.J(); ++j) e += rows(r, j) * lambda(j);
      b.AddEquality(e);
    }
    const MatrixXd image = polytope.R() * polytope.Q_pinv() * V;
    std::vector<LinExpr> x(polytope.n());
    for (int i = 0; i < polytope.n(); ++i) {
      for (int j = 0; j < polytope.J(); ++j) {
        if (image(i, j) != 0.0) x[i] += image(i, j) * lambda(j);
      }
    }
    ellitope.AddMembership(b, x);
    const VectorXd w = V.transpose() * d;
    LinExpr obj;
    for (int j = 0; j < polytope.J(); ++j) obj -= w(j) * lambda(j);
    b.Minimize(obj);
    const conic::SolverResult res = solver.Solve(b.Build());
    if (!res.ok()) throw SolverError("DualMaxOverYbar (primal)", res);
    out.primal = -(res.primal_objective + b.objective_offset());
  }
  {
    ProblemBuilder b;
    std::vector<LinExpr> dexpr;
    for (int r = 0; r < d.size(); ++r) dexpr.emplace_back(d(r));
    const YbarDualBlock block = AddYbarDual(b, ellitope, polytope, dexpr, full_E);
    b.Minimize(block.value);
    const conic::SolverResult res = solver.Solve(b.Build());
    if (!res.ok()) throw SolverError("DualMaxOverYbar (dual)", res);
    out.dual = res.primal_objective + b.objective_offset();
  }
  return out;
}

}  // namespace polyest
