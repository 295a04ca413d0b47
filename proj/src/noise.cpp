#include "polyest/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "polyest/errors.hpp"

namespace polyest {

namespace {

void CheckDelta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1), got " +
                                std::to_string(delta));
  }
}

// Acklam's rational approximation, relative error about 1.15e-9.
double AcklamQuantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  auto tail = [&](double q) {
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  };
  if (p < p_low) return tail(std::sqrt(-2.0 * std::log(p)));
  if (p > 1.0 - p_low) return -tail(std::sqrt(-2.0 * std::log1p(-p)));
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double NormalQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("NormalQuantile: p must lie in (0, 1)");
  }
  // Work in the lower half so the CDF residual is computed without
  // cancellation.
  if (p > 0.5) return -NormalQuantile(1.0 - p);
  double x = AcklamQuantile(p);
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

// ------------------------------------------------------------------ NoiseNorm

NoiseNorm::NoiseNorm(MatrixXd S_delta, std::vector<MatrixXd> S_ell,
                     MonotoneSet domain, NoiseKind kind, double delta)
    : ball_(std::move(S_delta), std::move(S_ell), std::move(domain)),
      kind_(kind),
      delta_(delta) {
  CheckDelta(delta);
  if (kind_ == NoiseKind::kEuclideanBall) {
    if (!ball_.p_is_identity() || L() != 1 ||
        ball_.domain().kind() != MonotoneKind::kBox ||
        !(ball_.T()[0] - MatrixXd::Identity(M(), M())).isZero(0.0) ||
        !(ball_.domain().upper_bounds()(0) > 0.0)) {
      throw std::invalid_argument(
          "NoiseNorm: Euclidean kind needs S_delta = S_1 = I and a box [0, s]");
    }
  }
}

double NoiseNorm::Evaluate(const Eigen::Ref<const VectorXd>& h,
                           const conic::ConicSolver& solver) const {
  return EllitopeGauge(ball_, h, solver);
}

double NoiseNorm::ZGauge(const Eigen::Ref<const VectorXd>& g) const {
  if (g.size() != M()) {
    throw std::invalid_argument("NoiseNorm::ZGauge: dimension mismatch");
  }
  const MonotoneSet& dom = domain();
  if (dom.kind() == MonotoneKind::kConicOracle) {
    throw UnsupportedError("NoiseNorm::ZGauge: conic-oracle domain");
  }
  const VectorXd& upper = dom.upper_bounds();
  double acc = 0.0;
  for (int l = 0; l < L(); ++l) {
    const double q = g.dot(S_ell()[l] * g);
    if (q <= 0.0) continue;
    if (upper(l) == 0.0) return std::numeric_limits<double>::infinity();
    if (dom.kind() == MonotoneKind::kBox) {
      acc = std::max(acc, q / upper(l));
    } else {
      acc += q / upper(l);
    }
  }
  return std::sqrt(acc);
}

double NoiseNorm::euclidean_scale() const {
  if (kind_ != NoiseKind::kEuclideanBall) {
    throw std::logic_error("NoiseNorm::euclidean_scale: not a Euclidean norm");
  }
  return 1.0 / std::sqrt(domain().upper_bounds()(0));
}

NoiseNorm GaussianNorm(double sigma_bar, double delta, int m) {
  CheckDelta(delta);
  if (!(sigma_bar > 0.0) || m <= 0) {
    throw std::invalid_argument("GaussianNorm: need sigma_bar > 0 and m > 0");
  }
  const double scale = sigma_bar * NormalQuantile(1.0 - delta / 2.0);
  VectorXd upper(1);
  upper(0) = 1.0 / (scale * scale);
  return NoiseNorm(MatrixXd::Identity(m, m), {MatrixXd::Identity(m, m)},
                   MonotoneSet::Box(upper), NoiseKind::kEuclideanBall, delta);
}

// --------------------------------------------------------------- MixtureModel

MixtureModel::MixtureModel(std::vector<VectorXd> a, std::vector<MatrixXd> Theta,
                           int N)
    : a_(std::move(a)), Theta_(std::move(Theta)), N_(N) {
  if (N_ <= 0) throw std::invalid_argument("MixtureModel: N must be positive");
  if (a_.empty() || a_.size() != Theta_.size()) {
    throw std::invalid_argument("MixtureModel: need n > 0 pairs (a_i, Theta_i)");
  }
  const Eigen::Index d = a_.front().size();
  Theta_sqrt_.reserve(Theta_.size());
  for (std::size_t i = 0; i < a_.size(); ++i) {
    if (a_[i].size() != d || Theta_[i].rows() != d || Theta_[i].cols() != d) {
      throw std::invalid_argument("MixtureModel: inconsistent dimensions");
    }
    Theta_[i] = Symmetrize(Theta_[i]);
    if (d > 0 && MinEigenvalue(Theta_[i]) < -1e-10) {
      throw std::invalid_argument("MixtureModel: Theta_" + std::to_string(i) +
                                  " is not PSD");
    }
    Theta_sqrt_.push_back(PsdSqrt(Theta_[i]));
  }
}

MatrixXd MixtureModel::A() const { return StackColumns(a_, d()); }

double MixtureBeta(int N, double delta) {
  CheckDelta(delta);
  if (N <= 0) throw std::invalid_argument("MixtureBeta: N must be positive");
  return std::sqrt(N / std::log(2.0 / delta));
}

NoiseNorm MixtureNorm(const MixtureModel& model, double delta) {
  const double beta = MixtureBeta(model.N(), delta);
  const double c = 4.0 / (beta * beta);
  const int n = model.n();
  std::vector<MatrixXd> S;
  S.reserve(n * (n + 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (i == j) {
        S.push_back(c * model.Theta()[i]);
      } else {
        const VectorXd diff = model.a()[i] - model.a()[j];
        S.push_back(c * diff * diff.transpose());
      }
    }
  }
  const int d = model.d();
  return NoiseNorm(MatrixXd::Identity(d, d), std::move(S),
                   MonotoneSet::UnitBox(n * (n + 1) / 2), NoiseKind::kGeneral,
                   delta);
}

bool IsAdmissible(const NoiseNorm& norm, const Eigen::Ref<const VectorXd>& h,
                  double tol) {
  if (h.size() != norm.m()) {
    throw std::invalid_argument("IsAdmissible: dimension mismatch");
  }
  return norm.Evaluate(h) <= 1.0 + tol;
}

VectorXd SampleGaussian(const Eigen::Ref<const VectorXd>& x,
                        const Eigen::Ref<const MatrixXd>& A, double sigma,
                        std::mt19937_64& rng) {
  if (A.cols() != x.size()) {
    throw std::invalid_argument("SampleGaussian: dimension mismatch");
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("SampleGaussian: sigma < 0");
  VectorXd omega = A * x;
  if (sigma == 0.0) return omega;
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega(i) += sigma * nd(rng);
  return omega;
}

VectorXd SampleMixture(const MixtureModel& model,
                       const Eigen::Ref<const VectorXd>& x,
                       std::mt19937_64& rng) {
  const int n = model.n();
  if (x.size() != n) {
    throw std::invalid_argument("SampleMixture: dimension mismatch");
  }
  if ((x.array() < -1e-12).any() || std::abs(x.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("SampleMixture: x is not a probability vector");
  }
  const int d = model.d();
  std::normal_distribution<double> nd;
  VectorXd total = VectorXd::Zero(d);
  VectorXd noise(d);
  int remaining = model.N();
  double mass_left = 1.0;
  for (int i = 0; i < n && remaining > 0; ++i) {
    const double xi = std::max(0.0, x(i));
    int k;
    if (i == n - 1 || mass_left <= xi) {
      k = remaining;
    } else {
      std::binomial_distribution<int> bin(remaining,
                                          std::clamp(xi / mass_left, 0.0, 1.0));
      k = bin(rng);
    }
    mass_left -= xi;
    remaining -= k;
    if (k == 0) continue;
    for (int r = 0; r < d; ++r) noise(r) = nd(rng);
    total += k * model.a()[i] + std::sqrt(static_cast<double>(k)) *
                                    (model.ThetaSqrt(i) * noise);
  }
  return total / model.N();
}

double TailBound(const MixtureModel& model, const Eigen::Ref<const VectorXd>& h,
                 double tau) {
  if (h.size() != model.d()) {
    throw std::invalid_argument("TailBound: dimension mismatch");
  }
  if (!(tau >= 0.0)) throw std::invalid_argument("TailBound: tau < 0");
  double kappa = 0.0, sigma2 = 0.0;
  for (int i = 0; i < model.n(); ++i) {
    sigma2 = std::max(sigma2, h.dot(model.Theta()[i] * h));
    for (int j = i + 1; j < model.n(); ++j) {
      kappa = std::max(kappa, std::abs(h.dot(model.a()[i] - model.a()[j])));
    }
  }
  const double v = kappa * kappa + sigma2;
  if (v == 0.0) return tau > 0.0 ? 0.0 : 2.0;
  return 2.0 * std::exp(-tau * tau * model.N() / (2.0 * v));
}

}  // namespace polyest
