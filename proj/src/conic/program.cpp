#include "polyest/conic/program.hpp"

#include <stdexcept>

namespace polyest::conic {

int ConeDims::TotalRows() const {
  int rows = linear;
  for (int q : soc) rows += q;
  for (int d : psd) rows += SvecSize(d);
  return rows;
}

int ConeDims::Degree() const {
  int deg = linear + static_cast<int>(soc.size());
  for (int d : psd) deg += d;
  return deg;
}

void ConeProgram::Validate() const {
  const int n = num_variables();
  const int rows = dims.TotalRows();
  if (G.rows() != rows || h.size() != rows || G.cols() != n) {
    throw std::invalid_argument("ConeProgram: G/h do not match the cone");
  }
  if (A.cols() != n || A.rows() != b.size()) {
    throw std::invalid_argument("ConeProgram: A/b dimension mismatch");
  }
  if (dims.linear < 0) throw std::invalid_argument("ConeProgram: bad dims");
  for (int q : dims.soc) {
    if (q < 1) throw std::invalid_argument("ConeProgram: empty SOC block");
  }
  for (int d : dims.psd) {
    if (d < 1) throw std::invalid_argument("ConeProgram: empty PSD block");
  }
}

LinExpr LinExpr::Var(int index, double coeff) {
  LinExpr e;
  e.terms_.emplace_back(index, coeff);
  return e;
}

void LinExpr::AddTerm(int index, double coeff) {
  if (coeff != 0.0) terms_.emplace_back(index, coeff);
}

LinExpr& LinExpr::operator+=(const LinExpr& other) {
  terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
  constant_ += other.constant_;
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& other) {
  terms_.reserve(terms_.size() + other.terms_.size());
  for (const auto& [i, a] : other.terms_) terms_.emplace_back(i, -a);
  constant_ -= other.constant_;
  return *this;
}

LinExpr& LinExpr::operator*=(double scale) {
  for (auto& term : terms_) term.second *= scale;
  constant_ *= scale;
  return *this;
}

double LinExpr::Evaluate(const Eigen::Ref<const VectorXd>& x) const {
  double v = constant_;
  for (const auto& [i, a] : terms_) v += a * x(i);
  return v;
}

LinExpr operator+(LinExpr lhs, const LinExpr& rhs) { return lhs += rhs; }
LinExpr operator-(LinExpr lhs, const LinExpr& rhs) { return lhs -= rhs; }
LinExpr operator-(LinExpr e) { return e *= -1.0; }
LinExpr operator*(double scale, LinExpr e) { return e *= scale; }
LinExpr operator*(LinExpr e, double scale) { return e *= scale; }

SymExpr::SymExpr(int dim) : dim_(dim), lower_(SvecSize(dim)) {}

SymExpr SymExpr::Constant(const Eigen::Ref<const MatrixXd>& M) {
  SymExpr e(static_cast<int>(M.rows()));
  for (int j = 0; j < e.dim_; ++j) {
    for (int i = j; i < e.dim_; ++i) {
      e.at(i, j) = LinExpr(0.5 * (M(i, j) + M(j, i)));
    }
  }
  return e;
}

LinExpr& SymExpr::at(int i, int j) {
  if (i < j) std::swap(i, j);
  return lower_[SvecIndex(dim_, i, j)];
}

const LinExpr& SymExpr::at(int i, int j) const {
  if (i < j) std::swap(i, j);
  return lower_[SvecIndex(dim_, i, j)];
}

SymExpr& SymExpr::operator+=(const SymExpr& other) {
  if (other.dim_ != dim_) throw std::invalid_argument("SymExpr: dim mismatch");
  for (std::size_t k = 0; k < lower_.size(); ++k) lower_[k] += other.lower_[k];
  return *this;
}

SymExpr& SymExpr::operator-=(const SymExpr& other) {
  if (other.dim_ != dim_) throw std::invalid_argument("SymExpr: dim mismatch");
  for (std::size_t k = 0; k < lower_.size(); ++k) lower_[k] -= other.lower_[k];
  return *this;
}

SymExpr& SymExpr::operator*=(double scale) {
  for (auto& e : lower_) e *= scale;
  return *this;
}

MatrixXd SymExpr::Evaluate(const Eigen::Ref<const VectorXd>& x) const {
  MatrixXd M(dim_, dim_);
  for (int j = 0; j < dim_; ++j) {
    for (int i = j; i < dim_; ++i) M(i, j) = M(j, i) = at(i, j).Evaluate(x);
  }
  return M;
}

SymExpr operator+(SymExpr lhs, const SymExpr& rhs) { return lhs += rhs; }
SymExpr operator-(SymExpr lhs, const SymExpr& rhs) { return lhs -= rhs; }

int SymVar::index(int i, int j) const {
  if (i < j) std::swap(i, j);
  return offset + SvecIndex(dim, i, j);
}

SymExpr SymVar::expr() const {
  SymExpr e(dim);
  for (int j = 0; j < dim; ++j) {
    for (int i = j; i < dim; ++i) e.at(i, j) = LinExpr::Var(index(i, j));
  }
  return e;
}

MatrixXd SymVar::Value(const Eigen::Ref<const VectorXd>& x) const {
  MatrixXd M(dim, dim);
  for (int j = 0; j < dim; ++j) {
    for (int i = j; i < dim; ++i) M(i, j) = M(j, i) = x(index(i, j));
  }
  return M;
}

VecVar ProblemBuilder::AddVector(int size) {
  VecVar v{size, num_vars_};
  num_vars_ += size;
  return v;
}

LinExpr ProblemBuilder::AddScalar() { return LinExpr::Var(num_vars_++); }

SymVar ProblemBuilder::AddSymmetric(int dim) {
  SymVar v{dim, num_vars_};
  num_vars_ += SvecSize(dim);
  return v;
}

void ProblemBuilder::Minimize(const LinExpr& objective) {
  objective_ = objective;
}

void ProblemBuilder::AddEquality(const LinExpr& e) { equalities_.push_back(e); }

void ProblemBuilder::AddNonnegative(const LinExpr& e) { nonneg_.push_back(e); }

void ProblemBuilder::AddSecondOrderCone(const LinExpr& t,
                                        const std::vector<LinExpr>& u) {
  std::vector<LinExpr> block;
  block.reserve(u.size() + 1);
  block.push_back(t);
  block.insert(block.end(), u.begin(), u.end());
  socs_.push_back(std::move(block));
}

void ProblemBuilder::AddL1Bound(const LinExpr& t,
                                const std::vector<LinExpr>& u) {
  VecVar bound = AddVector(static_cast<int>(u.size()));
  LinExpr total;
  for (int i = 0; i < bound.size; ++i) {
    AddNonnegative(bound(i) - u[i]);
    AddNonnegative(bound(i) + u[i]);
    total += bound(i);
  }
  AddNonnegative(t - total);
}

void ProblemBuilder::AddLinfBound(const LinExpr& t,
                                  const std::vector<LinExpr>& u) {
  for (const auto& ui : u) {
    AddNonnegative(t - ui);
    AddNonnegative(t + ui);
  }
}

void ProblemBuilder::AddPsd(const SymExpr& M) { psds_.push_back(M); }

namespace {

// Appends the row s_r = e(x), i.e. G(r, :) = -a and h(r) = a0.
void EmitConeRow(const LinExpr& e, int row, double scale,
                 std::vector<Triplet>* g, VectorXd* h) {
  for (const auto& [i, a] : e.terms()) g->emplace_back(row, i, -scale * a);
  (*h)(row) = scale * e.constant();
}

}  // namespace

ConeProgram ProblemBuilder::Build() const {
  ConeProgram prog;
  prog.dims.linear = static_cast<int>(nonneg_.size());
  for (const auto& block : socs_) {
    prog.dims.soc.push_back(static_cast<int>(block.size()));
  }
  for (const auto& M : psds_) prog.dims.psd.push_back(M.dim());

  const int n = num_vars_;
  prog.c = VectorXd::Zero(n);
  for (const auto& [i, a] : objective_.terms()) prog.c(i) += a;

  const int rows = prog.dims.TotalRows();
  prog.h = VectorXd::Zero(rows);
  std::vector<Triplet> g;
  int row = 0;
  for (const auto& e : nonneg_) EmitConeRow(e, row++, 1.0, &g, &prog.h);
  for (const auto& block : socs_) {
    for (const auto& e : block) EmitConeRow(e, row++, 1.0, &g, &prog.h);
  }
  for (const auto& M : psds_) {
    for (int j = 0; j < M.dim(); ++j) {
      EmitConeRow(M.at(j, j), row++, 1.0, &g, &prog.h);
      for (int i = j + 1; i < M.dim(); ++i) {
        EmitConeRow(M.at(i, j), row++, kSqrt2, &g, &prog.h);
      }
    }
  }
  prog.G.resize(rows, n);
  prog.G.setFromTriplets(g.begin(), g.end());
  prog.G.prune(0.0);

  const int p = static_cast<int>(equalities_.size());
  prog.b = VectorXd::Zero(p);
  std::vector<Triplet> a;
  for (int r = 0; r < p; ++r) {
    for (const auto& [i, coeff] : equalities_[r].terms()) {
      a.emplace_back(r, i, coeff);
    }
    prog.b(r) = -equalities_[r].constant();
  }
  prog.A.resize(p, n);
  prog.A.setFromTriplets(a.begin(), a.end());
  prog.A.prune(0.0);
  return prog;
}

}  // namespace polyest::conic
