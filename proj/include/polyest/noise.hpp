#pragma once

#include <random>
#include <vector>

#include "polyest/linalg.hpp"
#include "polyest/sets.hpp"

namespace polyest {

/// p-quantile of the standard normal distribution. Rational approximation
/// (Acklam) refined by one Halley step on erfc; absolute error below 1e-12
/// on (1e-300, 1 - 1e-16).
double NormalQuantile(double p);

enum class NoiseKind { kEuclideanBall, kGeneral };

/// Norm pi_delta whose unit ball is the ellitope
///   B = {h = S_delta z : z^T S_l z <= s_l, s in domain}.
class NoiseNorm {
 public:
  NoiseNorm(MatrixXd S_delta, std::vector<MatrixXd> S_ell, MonotoneSet domain,
            NoiseKind kind, double delta);

  NoiseKind kind() const { return kind_; }
  double delta() const { return delta_; }
  int m() const { return ball_.n(); }
  int M() const { return ball_.N(); }
  int L() const { return ball_.K(); }
  const MatrixXd& S_delta() const { return ball_.P(); }
  const std::vector<MatrixXd>& S_ell() const { return ball_.T(); }
  const MonotoneSet& domain() const { return ball_.domain(); }
  /// The unit ball as an ellitope.
  const Ellitope& ball() const { return ball_; }

  /// pi_delta(h).
  double Evaluate(const Eigen::Ref<const VectorXd>& h,
                  const conic::ConicSolver& solver = {}) const;
  /// Gauge of the z-space ball {z : z^T S_l z <= s_l, s in domain}.
  double ZGauge(const Eigen::Ref<const VectorXd>& g) const;

  /// For the Euclidean kind, sigma_bar * q_{1 - delta/2} (pi = c ||h||_2).
  double euclidean_scale() const;

 private:
  Ellitope ball_;
  NoiseKind kind_;
  double delta_;
};

/// pi_delta(h) = sigma_bar q_{1-delta/2} ||h||_2 on R^m.
NoiseNorm GaussianNorm(double sigma_bar, double delta, int m);

/// n sub-Gaussian families SG(a_i, Theta_i) in R^d observed through the
/// average of N draws. Gaussians stand in for the sub-Gaussian members.
class MixtureModel {
 public:
  MixtureModel(std::vector<VectorXd> a, std::vector<MatrixXd> Theta, int N);

  int n() const { return static_cast<int>(a_.size()); }
  int d() const { return static_cast<int>(a_.front().size()); }
  int N() const { return N_; }
  const std::vector<VectorXd>& a() const { return a_; }
  const std::vector<MatrixXd>& Theta() const { return Theta_; }
  /// d x n matrix with columns a_i.
  MatrixXd A() const;
  const MatrixXd& ThetaSqrt(int i) const { return Theta_sqrt_.at(i); }

 private:
  std::vector<VectorXd> a_;
  std::vector<MatrixXd> Theta_;
  std::vector<MatrixXd> Theta_sqrt_;
  int N_;
};

/// pi_delta(g) = 2/beta max[max_{i,j} |g^T (a_i - a_j)|, max_i sqrt(g^T Theta_i g)]
/// with beta = sqrt(N / ln(2/delta)); S_delta = I_d, L = n(n+1)/2 matrices
/// ordered (i, j) for i <= j, row by row, and the unit box domain.
NoiseNorm MixtureNorm(const MixtureModel& model, double delta);

/// beta = sqrt(N / ln(2/delta)).
double MixtureBeta(int N, double delta);

bool IsAdmissible(const NoiseNorm& norm, const Eigen::Ref<const VectorXd>& h,
                  double tol = 1e-8);

/// omega = A x + sigma * N(0, I).
VectorXd SampleGaussian(const Eigen::Ref<const VectorXd>& x,
                        const Eigen::Ref<const MatrixXd>& A, double sigma,
                        std::mt19937_64& rng);

/// Average of N draws omega_t ~ N(a_{i_t}, Theta_{i_t}), i_t ~ x. Draws are
/// grouped by component: multinomial counts k_i, then each group sum is
/// k_i a_i + sqrt(k_i) Theta_i^{1/2} N(0, I), which has the same law.
VectorXd SampleMixture(const MixtureModel& model,
                       const Eigen::Ref<const VectorXd>& x,
                       std::mt19937_64& rng);

/// 2 exp(-tau^2 N / (2 (kappa^2 + sigma^2))) with kappa = max |h^T(a_i - a_j)|
/// and sigma^2 = max h^T Theta_i h. The bound does not depend on the signal.
double TailBound(const MixtureModel& model, const Eigen::Ref<const VectorXd>& h,
                 double tau);

}  // namespace polyest
