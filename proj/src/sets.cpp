#include "polyest/sets.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "polyest/errors.hpp"

namespace polyest {

using conic::LinExpr;
using conic::ProblemBuilder;

namespace {

constexpr double kPsdTol = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();

void CheckDim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(got) + " vs " +
                                std::to_string(want) + ")");
  }
}

bool IsIdentity(const MatrixXd& M) {
  return M.rows() == M.cols() &&
         (M - MatrixXd::Identity(M.rows(), M.cols())).cwiseAbs().maxCoeff() ==
             0.0;
}

// V lambda must lie in the range of Q.
void AddRangeConstraints(const PolytopeImage& poly, ProblemBuilder& builder,
                         const conic::VecVar& lambda) {
  const MatrixXd off_range =
      (MatrixXd::Identity(poly.p(), poly.p()) - poly.Q() * poly.Q_pinv()) *
      poly.V();
  if (off_range.cwiseAbs().maxCoeff() <= 1e-12) return;
  const MatrixXd rows = RowSpaceBasis(off_range);
  for (int r = 0; r < rows.rows(); ++r) {
    LinExpr e;
    for (int j = 0; j < poly.J(); ++j) e += rows(r, j) * lambda(j);
    builder.AddEquality(e);
  }
}

}  // namespace

// ---------------------------------------------------------------- MonotoneSet

MonotoneSet::MonotoneSet(MonotoneKind kind, int dim, VectorXd upper,
                         std::string desc)
    : kind_(kind), dim_(dim), upper_(std::move(upper)),
      description_(std::move(desc)) {}

MonotoneSet MonotoneSet::Box(VectorXd upper) {
  if (upper.size() == 0) throw std::invalid_argument("MonotoneSet: empty box");
  if ((upper.array() < 0).any() || !upper.allFinite()) {
    throw std::invalid_argument("MonotoneSet: box bounds must be finite and >= 0");
  }
  const int dim = static_cast<int>(upper.size());
  return MonotoneSet(MonotoneKind::kBox, dim, std::move(upper), "box");
}

MonotoneSet MonotoneSet::UnitBox(int dim) {
  return Box(VectorXd::Ones(dim));
}

MonotoneSet MonotoneSet::ScaledSimplex(VectorXd upper) {
  if (upper.size() == 0) {
    throw std::invalid_argument("MonotoneSet: empty simplex");
  }
  if ((upper.array() <= 0).any() || !upper.allFinite()) {
    throw std::invalid_argument("MonotoneSet: simplex scales must be > 0");
  }
  const int dim = static_cast<int>(upper.size());
  return MonotoneSet(MonotoneKind::kScaledSimplex, dim, std::move(upper),
                     "scaled simplex");
}

MonotoneSet MonotoneSet::ConicOracle(int dim, std::string description) {
  if (dim <= 0) throw std::invalid_argument("MonotoneSet: bad dimension");
  return MonotoneSet(MonotoneKind::kConicOracle, dim, VectorXd(),
                     std::move(description));
}

bool MonotoneSet::Contains(const Eigen::Ref<const VectorXd>& s,
                           double tol) const {
  CheckDim(s.size(), dim_, "MonotoneSet::Contains");
  if ((s.array() < -tol).any()) return false;
  switch (kind_) {
    case MonotoneKind::kBox:
      return ((s - upper_).array() <= tol).all();
    case MonotoneKind::kScaledSimplex:
      return s.cwiseMax(0.0).cwiseQuotient(upper_).sum() <= 1.0 + tol;
    case MonotoneKind::kConicOracle:
      break;
  }
  throw UnsupportedError("MonotoneSet: membership needs a conic oracle (" +
                         description_ + ")");
}

void MonotoneSet::AddScaledMembership(ProblemBuilder& builder,
                                      const std::vector<LinExpr>& tau,
                                      const LinExpr& u) const {
  CheckDim(static_cast<Eigen::Index>(tau.size()), dim_,
           "MonotoneSet::AddScaledMembership");
  switch (kind_) {
    case MonotoneKind::kBox:
      for (int k = 0; k < dim_; ++k) {
        builder.AddNonnegative(tau[k]);
        builder.AddNonnegative(upper_(k) * u - tau[k]);
      }
      return;
    case MonotoneKind::kScaledSimplex: {
      LinExpr budget = u;
      for (int k = 0; k < dim_; ++k) {
        builder.AddNonnegative(tau[k]);
        budget -= (1.0 / upper_(k)) * tau[k];
      }
      builder.AddNonnegative(budget);
      return;
    }
    case MonotoneKind::kConicOracle:
      break;
  }
  throw UnsupportedError("MonotoneSet: conic-oracle sets cannot be lowered (" +
                         description_ + ")");
}

double SupportFunction(const MonotoneSet& set,
                       const Eigen::Ref<const VectorXd>& g) {
  CheckDim(g.size(), set.dim(), "SupportFunction");
  switch (set.kind()) {
    case MonotoneKind::kBox:
      return g.cwiseMax(0.0).dot(set.upper_bounds());
    case MonotoneKind::kScaledSimplex:
      return std::max(0.0, g.cwiseProduct(set.upper_bounds()).maxCoeff());
    case MonotoneKind::kConicOracle:
      break;
  }
  throw UnsupportedError("SupportFunction: conic-oracle set (" +
                         set.description() + ")");
}

// ------------------------------------------------------------------- Ellitope

Ellitope::Ellitope(MatrixXd P, std::vector<MatrixXd> T, MonotoneSet domain)
    : P_(std::move(P)), domain_(std::move(domain)) {
  if (T.empty()) throw std::invalid_argument("Ellitope: need at least one T_k");
  CheckDim(static_cast<Eigen::Index>(T.size()), domain_.dim(),
           "Ellitope domain");
  const Eigen::Index N = P_.cols();
  MatrixXd total = MatrixXd::Zero(N, N);
  T_.reserve(T.size());
  for (std::size_t k = 0; k < T.size(); ++k) {
    CheckDim(T[k].rows(), N, "Ellitope T_k rows");
    CheckDim(T[k].cols(), N, "Ellitope T_k cols");
    MatrixXd Tk = Symmetrize(T[k]);
    if (MinEigenvalue(Tk) < -kPsdTol) {
      throw std::invalid_argument("Ellitope: T_" + std::to_string(k) +
                                  " is not PSD");
    }
    total += Tk;
    T_.push_back(std::move(Tk));
  }
  if (MinEigenvalue(total) <= kPsdTol) {
    throw std::invalid_argument("Ellitope: sum of T_k is not positive definite");
  }
  thin_E_.reserve(T_.size());
  for (const MatrixXd& Tk : T_) thin_E_.push_back(PsdFactor(4.0 * Tk));
  p_identity_ = IsIdentity(P_);
}

Ellitope Ellitope::Ball(int n, double radius) {
  if (n <= 0 || !(radius > 0)) {
    throw std::invalid_argument("Ellitope::Ball: need n > 0 and radius > 0");
  }
  return Ellitope(MatrixXd::Identity(n, n),
                  {MatrixXd::Identity(n, n) / (radius * radius)},
                  MonotoneSet::UnitBox(1));
}

Ellitope Ellitope::BallBox(int n, double rho2, double rho_inf) {
  if (n <= 0 || !(rho2 > 0) || !(rho_inf > 0)) {
    throw std::invalid_argument("Ellitope::BallBox: bad parameters");
  }
  std::vector<MatrixXd> T;
  T.push_back(MatrixXd::Identity(n, n) / (rho2 * rho2));
  for (int i = 0; i < n; ++i) {
    MatrixXd Ti = MatrixXd::Zero(n, n);
    Ti(i, i) = 1.0 / (rho_inf * rho_inf);
    T.push_back(std::move(Ti));
  }
  return Ellitope(MatrixXd::Identity(n, n), std::move(T),
                  MonotoneSet::UnitBox(n + 1));
}

MatrixXd Ellitope::E(int k) const { return 2.0 * PsdSqrt(T_.at(k)); }

void Ellitope::AddMembership(ProblemBuilder& builder,
                             const std::vector<LinExpr>& x) const {
  CheckDim(static_cast<Eigen::Index>(x.size()), n(), "Ellitope::AddMembership");
  std::vector<LinExpr> z;
  if (p_identity_) {
    z = x;
  } else {
    z = Exprs(builder.AddVector(N()));
    for (int i = 0; i < n(); ++i) {
      LinExpr row = x[i];
      for (int j = 0; j < N(); ++j) row -= P_(i, j) * z[j];
      builder.AddEquality(row);
    }
  }
  const conic::VecVar t = builder.AddVector(K());
  for (int k = 0; k < K(); ++k) {
    const MatrixXd& F = thin_E_[k];
    std::vector<LinExpr> u;
    u.reserve(F.rows() + 1);
    for (int r = 0; r < F.rows(); ++r) {
      LinExpr e;
      for (int j = 0; j < N(); ++j) {
        if (F(r, j) != 0.0) e += F(r, j) * z[j];
      }
      u.push_back(std::move(e));
    }
    u.push_back(t(k) - 1.0);
    builder.AddSecondOrderCone(t(k) + 1.0, u);
  }
  domain_.AddScaledMembership(builder, Exprs(t), LinExpr(1.0));
}

double EllitopeGauge(const Ellitope& e, const Eigen::Ref<const VectorXd>& x,
                     const conic::ConicSolver& solver) {
  CheckDim(x.size(), e.n(), "EllitopeGauge");
  const MonotoneSet& dom = e.domain();
  if (e.p_is_identity() && dom.kind() != MonotoneKind::kConicOracle) {
    // z = x, q_k = x^T T_k x; x in u X iff q_k / u^2 lies in the domain.
    VectorXd q(e.K());
    for (int k = 0; k < e.K(); ++k) q(k) = x.dot(e.T()[k] * x);
    if (dom.kind() == MonotoneKind::kBox) {
      double u2 = 0.0;
      for (int k = 0; k < e.K(); ++k) {
        if (q(k) <= 0.0) continue;
        if (dom.upper_bounds()(k) == 0.0) return kInf;
        u2 = std::max(u2, q(k) / dom.upper_bounds()(k));
      }
      return std::sqrt(u2);
    }
    return std::sqrt(q.cwiseMax(0.0).cwiseQuotient(dom.upper_bounds()).sum());
  }

  ProblemBuilder b;
  const LinExpr u = b.AddScalar();
  const conic::VecVar z = b.AddVector(e.N());
  const conic::VecVar tau = b.AddVector(e.K());
  for (int i = 0; i < e.n(); ++i) {
    LinExpr row(-x(i));
    for (int j = 0; j < e.N(); ++j) row += e.P()(i, j) * z(j);
    b.AddEquality(row);
  }
  for (int k = 0; k < e.K(); ++k) {
    // ||[F_k z; u - tau_k]|| <= u + tau_k  <=>  z^T T_k z <= u tau_k.
    const MatrixXd& F = e.ThinE(k);
    std::vector<LinExpr> v;
    for (int r = 0; r < F.rows(); ++r) {
      LinExpr row;
      for (int j = 0; j < e.N(); ++j) {
        if (F(r, j) != 0.0) row += F(r, j) * z(j);
      }
      v.push_back(std::move(row));
    }
    v.push_back(u - tau(k));
    b.AddSecondOrderCone(u + tau(k), v);
  }
  dom.AddScaledMembership(b, Exprs(tau), u);
  b.Minimize(u);
  const conic::SolverResult r = solver.Solve(b.Build());
  if (r.status == conic::SolveStatus::kPrimalInfeasible) return kInf;
  if (!r.ok()) throw SolverError("EllitopeGauge", r);
  return std::max(0.0, r.primal_objective);
}

bool EllitopeMembership(const Ellitope& e, const Eigen::Ref<const VectorXd>& x,
                        double tol, const conic::ConicSolver& solver) {
  return EllitopeGauge(e, x, solver) <= 1.0 + tol;
}

// -------------------------------------------------------------- PolytopeImage

PolytopeImage::PolytopeImage(MatrixXd R, MatrixXd Q, MatrixXd V)
    : R_(std::move(R)), Q_(std::move(Q)), V_(std::move(V)) {
  CheckDim(R_.cols(), Q_.cols(), "PolytopeImage R/Q columns");
  CheckDim(V_.rows(), Q_.rows(), "PolytopeImage V/Q rows");
  if (Q_.cols() == 0 || V_.cols() == 0) {
    throw std::invalid_argument("PolytopeImage: empty Q or V");
  }
  if (Q_.rows() < Q_.cols()) {
    throw std::invalid_argument("PolytopeImage: Q has a nontrivial kernel");
  }
  Eigen::JacobiSVD<MatrixXd> svd(Q_);
  if (svd.singularValues().minCoeff() <= 1e-10) {
    throw std::invalid_argument("PolytopeImage: Q has a nontrivial kernel");
  }
  Q_pinv_ = PseudoInverse(Q_);
  const double err =
      (Q_pinv_ * Q_ - MatrixXd::Identity(q(), q())).cwiseAbs().maxCoeff();
  if (err > 1e-8) {
    throw std::invalid_argument("PolytopeImage: pseudoinverse is inaccurate");
  }
}

PolytopeImage PolytopeImage::L1Ball(int n, double radius) {
  if (n <= 0 || !(radius > 0)) {
    throw std::invalid_argument("PolytopeImage::L1Ball: bad parameters");
  }
  return PolytopeImage(MatrixXd::Identity(n, n), MatrixXd::Identity(n, n),
                       radius * MatrixXd::Identity(n, n));
}

void PolytopeImage::AddMembership(ProblemBuilder& builder,
                                  const std::vector<LinExpr>& x) const {
  CheckDim(static_cast<Eigen::Index>(x.size()), n(),
           "PolytopeImage::AddMembership");
  // Ker Q = {0} gives w = Q^+ V lambda, valid when V lambda lies in the range
  // of Q.
  const conic::VecVar lambda = builder.AddVector(J());
  const MatrixXd image = R_ * Q_pinv_ * V_;
  for (int i = 0; i < n(); ++i) {
    LinExpr row = x[i];
    for (int j = 0; j < J(); ++j) {
      if (image(i, j) != 0.0) row -= image(i, j) * lambda(j);
    }
    builder.AddEquality(row);
  }
  AddRangeConstraints(*this, builder, lambda);
  builder.AddL1Bound(LinExpr(1.0), Exprs(lambda));
}

std::vector<VectorXd> PolytopeImage::Vertices() const {
  const MatrixXd image = R_ * Q_pinv_ * V_;
  std::vector<VectorXd> out;
  out.reserve(2 * J());
  for (int j = 0; j < J(); ++j) {
    out.push_back(image.col(j));
    out.push_back(-image.col(j));
  }
  return out;
}

MatrixXd SbarMatrix(const Eigen::Ref<const MatrixXd>& S,
                    const PolytopeImage& poly) {
  CheckDim(S.rows(), poly.n(), "SbarMatrix rows");
  CheckDim(S.cols(), poly.n(), "SbarMatrix cols");
  const MatrixXd RQ = poly.R() * poly.Q_pinv();
  return Symmetrize(RQ.transpose() * S * RQ);
}

// ------------------------------------------------------------------ SignalSet

bool SignalSet::has_simplex() const {
  for (ExtraConstraint c : extras) {
    if (c == ExtraConstraint::kProbabilitySimplex) return true;
  }
  return false;
}

void SignalSet::AddMembership(ProblemBuilder& builder,
                              const std::vector<LinExpr>& x) const {
  AddSymmetricHullMembership(builder, x);
  if (has_simplex()) {
    LinExpr total(-1.0);
    for (const LinExpr& xi : x) {
      builder.AddNonnegative(xi);
      total += xi;
    }
    builder.AddEquality(total);
  }
}

void SignalSet::AddSymmetricHullMembership(
    ProblemBuilder& builder, const std::vector<LinExpr>& x) const {
  CheckDim(polytope.n(), ellitope.n(), "SignalSet ellitope/polytope");
  ellitope.AddMembership(builder, x);
  polytope.AddMembership(builder, x);
}

std::vector<VectorXd> SignalSet::SamplingVertices() const {
  if (has_simplex()) {
    std::vector<VectorXd> out;
    for (int i = 0; i < n(); ++i) out.push_back(VectorXd::Unit(n(), i));
    return out;
  }
  return polytope.Vertices();
}

bool SignalSet::Contains(const Eigen::Ref<const VectorXd>& x, double tol,
                         const conic::ConicSolver& solver) const {
  CheckDim(x.size(), n(), "SignalSet::Contains");
  if (has_simplex()) {
    if ((x.array() < -tol).any() || std::abs(x.sum() - 1.0) > tol) return false;
  }
  if (!EllitopeMembership(ellitope, x, tol, solver)) return false;
  // Polytope gauge: min ||lambda||_1 with x = R Q^+ V lambda.
  ProblemBuilder b;
  const LinExpr t = b.AddScalar();
  const conic::VecVar lambda = b.AddVector(polytope.J());
  const MatrixXd image = polytope.R() * polytope.Q_pinv() * polytope.V();
  for (int i = 0; i < n(); ++i) {
    LinExpr row(-x(i));
    for (int j = 0; j < polytope.J(); ++j) row += image(i, j) * lambda(j);
    b.AddEquality(row);
  }
  AddRangeConstraints(polytope, b, lambda);
  b.AddL1Bound(t, Exprs(lambda));
  b.Minimize(t);
  const conic::SolverResult r = solver.Solve(b.Build());
  if (r.status == conic::SolveStatus::kPrimalInfeasible) return false;
  if (!r.ok()) throw SolverError("SignalSet::Contains", r);
  return r.primal_objective <= 1.0 + tol;
}

std::vector<LinExpr> Exprs(const conic::VecVar& v) {
  std::vector<LinExpr> out;
  out.reserve(v.size);
  for (int i = 0; i < v.size; ++i) out.push_back(v(i));
  return out;
}

}  // namespace polyest
