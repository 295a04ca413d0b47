#include "polyest/contrast.hpp"

#include <stdexcept>

namespace polyest {

const char* ToString(ColumnSide side) {
  return side == ColumnSide::kEllitope ? "ellitope" : "polytope";
}

int ContrastMatrix::count(ColumnSide side) const {
  int c = 0;
  for (ColumnSide s : provenance) c += s == side;
  return c;
}

ContrastMatrix ContrastMatrix::Select(ColumnSide side) const {
  ContrastMatrix out = Empty(rows(), delta);
  const int k = count(side);
  out.H.resize(rows(), k);
  out.weights.resize(k);
  int c = 0;
  for (int j = 0; j < cols(); ++j) {
    if (provenance[j] != side) continue;
    out.H.col(c) = H.col(j);
    out.weights(c) = weights(j);
    out.provenance.push_back(side);
    ++c;
  }
  return out;
}

ContrastMatrix ContrastMatrix::Concat(const ContrastMatrix& a,
                                      const ContrastMatrix& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("ContrastMatrix::Concat: row mismatch");
  }
  if (a.delta != b.delta) {
    throw std::invalid_argument("ContrastMatrix::Concat: delta mismatch");
  }
  ContrastMatrix out;
  out.delta = a.delta;
  out.H.resize(a.rows(), a.cols() + b.cols());
  out.H << a.H, b.H;
  out.weights.resize(a.cols() + b.cols());
  out.weights << a.weights, b.weights;
  out.provenance = a.provenance;
  out.provenance.insert(out.provenance.end(), b.provenance.begin(),
                        b.provenance.end());
  return out;
}

ContrastMatrix ContrastMatrix::Empty(int m, double delta) {
  ContrastMatrix out;
  out.H.resize(m, 0);
  out.weights.resize(0);
  out.delta = delta;
  return out;
}

double ContrastMatrix::MaxNorm(const NoiseNorm& norm) const {
  double worst = 0.0;
  for (int j = 0; j < cols(); ++j) {
    worst = std::max(worst, norm.Evaluate(H.col(j)));
  }
  return worst;
}

}  // namespace polyest
