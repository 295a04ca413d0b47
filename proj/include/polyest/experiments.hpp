#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyest/contrast.hpp"
#include "polyest/design.hpp"
#include "polyest/estimator.hpp"
#include "polyest/linalg.hpp"

namespace polyest {

enum class ExperimentKind { kL1Ellitope, kMixture };

const char* ToString(ExperimentKind kind);
/// Accepts "l1-ellitope" and "mixture".
ExperimentKind ParseExperimentKind(const std::string& name);

/// Parameters of one experiment run. Fields left unset in JSON take
/// kind-dependent defaults (see FromJson); ToJson writes every field, so a
/// serialized config determines a rerun.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kL1Ellitope;
  int n = 16;
  /// Observation dimension (m rows of A; d for the mixture).
  int m = 16;
  int nu = 30;
  /// l1 radius, ball radius and box half-width of the signal set.
  double rho1 = 2.5;
  double rho2 = 2.125;
  double rho_inf = 1.75;
  /// Condition numbers of the random A and B (l1-ellitope kind).
  double cond_A = 1e3;
  double cond_B = 8.0;
  /// Gaussian noise level (l1-ellitope kind).
  double sigma = 0.01;
  /// Draws averaged per observation (mixture kind).
  int N = 10000;
  /// Target risk level; delta is derived from it unless set explicitly.
  double epsilon = 0.01;
  /// Fixed delta; 0 selects delta = epsilon / (number of contrasts).
  double delta = 0.0;
  int trials = 100;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  /// Defaults of the scaled l1-ellitope instance: radii 10, 8.5, 7 times
  /// n / 64, nu = 2n - 2, m = n.
  static ExperimentConfig L1Ellitope(int n);
  /// Defaults of the mixture instance: n = d, N = 1e4, ball 1, box 1/2,
  /// l1 radius 1, nu = n.
  static ExperimentConfig Mixture(int n);

  /// Throws std::invalid_argument on out-of-range fields.
  void Validate() const;
  nlohmann::json ToJson() const;
  /// Unknown keys are rejected.
  static ExperimentConfig FromJson(const nlohmann::json& j);
  /// FNV-1a of ToJson() without out_dir, as 16 hex digits.
  std::string Hash() const;
};

/// rows x cols matrix U diag(s) V^T with Haar-distributed orthogonal factors
/// and singular values log-spaced from 1 down to 1 / cond.
MatrixXd RandomMatrixWithCondition(int rows, int cols, double cond,
                                   std::mt19937_64& rng);

/// One design (full, ellitope-only or polytope-only) and its contrast.
struct DesignRecord {
  std::string name;
  DesignMode mode = DesignMode::kFull;
  double phi_gamma = 0.0;
  double rho = 0.0;
  double varsigma = 0.0;
  /// 2 sqrt(phi_gamma + rho + varsigma).
  double bound = 0.0;
  double delta = 0.0;
  /// columns * delta.
  double epsilon = 0.0;
  int ellitope_columns = 0;
  int polytope_columns = 0;
  /// Signed eigenvalues, descending.
  VectorXd eig_U;
  VectorXd eig_S;
  VectorXd eig_US;
  ContrastMatrix H;

  int columns() const { return ellitope_columns + polytope_columns; }
};

struct RunRecord {
  ExperimentConfig config;
  std::string hash;
  /// Singular values of A and B, descending.
  VectorXd sv_A;
  VectorXd sv_B;
  std::vector<DesignRecord> designs;
  /// One report per estimator; empty when config.trials == 0.
  std::vector<RiskReport> risks;

  const DesignRecord& design(const std::string& name) const;
};

/// Random A (cond_A) and B (cond_B), the l1 / ball-box set and Gaussian
/// noise; full, ellitope-only and polytope-only designs; Monte-Carlo of the
/// three polyhedral estimates and least squares.
RunRecord RunExperimentOne(const ExperimentConfig& config);

/// Mixture of n Gaussian families with unit-norm means and unit spectral
/// norm covariances; X = simplex ∩ ball-box, B = I, l1 loss.
RunRecord RunExperimentTwo(const ExperimentConfig& config);

/// Dispatches on config.kind.
RunRecord RunExperiment(const ExperimentConfig& config);

/// Writes <kind>-<hash>-{errors.csv, designs.csv, spectra.csv, summary.json,
/// errors.svg, spectra.svg} into `dir` and returns the paths.
std::vector<std::filesystem::path> EmitReport(const RunRecord& record,
                                              const std::filesystem::path& dir);

/// Shortest round-trip decimal form, independent of the locale.
std::string FormatDouble(double v);

/// Summary of a record as JSON (also the content of summary.json).
nlohmann::json RecordSummary(const RunRecord& record);

}  // namespace polyest
