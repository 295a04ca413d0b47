#pragma once

#include <vector>

#include "polyest/linalg.hpp"
#include "polyest/noise.hpp"

namespace polyest {

enum class ColumnSide { kEllitope, kPolytope };

const char* ToString(ColumnSide side);

/// delta-admissible contrast matrix H = [h_1, ..., h_mu] with per-column
/// provenance. `weights` holds lambda_j for ellitope-side columns (so that
/// Theta = sum_j lambda_j h_j h_j^T over those columns) and 0 otherwise.
struct ContrastMatrix {
  MatrixXd H;
  std::vector<ColumnSide> provenance;
  VectorXd weights;
  double delta = 0.0;

  int rows() const { return static_cast<int>(H.rows()); }
  int cols() const { return static_cast<int>(H.cols()); }
  bool empty() const { return H.cols() == 0; }
  int count(ColumnSide side) const;

  /// Columns of one side, in order.
  ContrastMatrix Select(ColumnSide side) const;
  /// Column-wise concatenation; both parts must share m and delta.
  static ContrastMatrix Concat(const ContrastMatrix& a, const ContrastMatrix& b);
  static ContrastMatrix Empty(int m, double delta);

  /// max_j pi_delta(h_j) (0 for an empty matrix).
  double MaxNorm(const NoiseNorm& norm) const;
};

}  // namespace polyest
