#include "polyest/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polyest/errors.hpp"

namespace polyest {

using conic::LinExpr;
using conic::ProblemBuilder;
using conic::VecVar;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool Acceptable(const conic::SolverResult& r) {
  if (r.ok()) return true;
  if (r.status != conic::SolveStatus::kMaxIterations) return false;
  return r.primal_residual <= 1e-7 && r.dual_residual <= 1e-7;
}

// Gauge of {x = R Q^+ V lambda : ||lambda||_1 <= 1, V lambda in range Q}.
class PolytopeGauge {
 public:
  explicit PolytopeGauge(const PolytopeImage& poly) : poly_(poly) {
    const MatrixXd image = poly.R() * poly.Q_pinv() * poly.V();
    const bool in_range =
        ((MatrixXd::Identity(poly.p(), poly.p()) - poly.Q() * poly.Q_pinv()) *
         poly.V())
            .cwiseAbs()
            .maxCoeff() <= 1e-12;
    if (in_range && image.rows() == image.cols()) {
      Eigen::FullPivLU<MatrixXd> lu(image);
      if (lu.isInvertible()) inverse_ = lu.inverse();
    }
  }

  double operator()(const VectorXd& x) const {
    if (inverse_) return (*inverse_ * x).cwiseAbs().sum();
    ProblemBuilder b;
    const VecVar lambda = b.AddVector(poly_.J());
    const LinExpr u = b.AddScalar();
    b.AddL1Bound(u, Exprs(lambda));
    const MatrixXd image = poly_.R() * poly_.Q_pinv() * poly_.V();
    for (int i = 0; i < poly_.n(); ++i) {
      LinExpr e(-x(i));
      for (int j = 0; j < poly_.J(); ++j) e += image(i, j) * lambda(j);
      b.AddEquality(e);
    }
    const MatrixXd rows = RowSpaceBasis(
        (MatrixXd::Identity(poly_.p(), poly_.p()) -
         poly_.Q() * poly_.Q_pinv()) * poly_.V());
    for (int r = 0; r < rows.rows(); ++r) {
      LinExpr e;
      for (int j = 0; j < poly_.J(); ++j) e += rows(r, j) * lambda(j);
      b.AddEquality(e);
    }
    b.Minimize(u);
    const conic::SolverResult res = conic::SolveConeProgram(b.Build());
    if (res.status == conic::SolveStatus::kPrimalInfeasible) return kInf;
    if (!Acceptable(res)) throw SolverError("polytope gauge", res);
    return res.primal_objective;
  }

 private:
  const PolytopeImage& poly_;
  std::optional<MatrixXd> inverse_;
};

}  // namespace

double ThetaNorm(const Eigen::Ref<const VectorXd>& v, double theta) {
  if (!(theta >= 1.0)) throw std::invalid_argument("ThetaNorm: theta >= 1");
  if (theta == 1.0) return v.cwiseAbs().sum();
  if (theta == 2.0) return v.norm();
  return std::pow(v.cwiseAbs().array().pow(theta).sum(), 1.0 / theta);
}

// ---------------------------------------------------------------- estimate

EstimateResult Estimate(const Eigen::Ref<const VectorXd>& omega,
                        const ContrastMatrix& H, const SignalSet& X,
                        const Eigen::Ref<const MatrixXd>& A,
                        const Eigen::Ref<const MatrixXd>& B,
                        const conic::ConicSolver& solver) {
  if (H.empty()) throw std::invalid_argument("Estimate: empty contrast matrix");
  if (A.cols() != X.n() || B.cols() != X.n() || A.rows() != omega.size() ||
      H.rows() != omega.size()) {
    throw std::invalid_argument("Estimate: dimension mismatch");
  }
  const MatrixXd HA = H.H.transpose() * A;
  const VectorXd Ho = H.H.transpose() * omega;
  ProblemBuilder b;
  const VecVar x = b.AddVector(X.n());
  const LinExpr t = b.AddScalar();
  std::vector<LinExpr> r(H.cols());
  for (int i = 0; i < H.cols(); ++i) {
    r[i] = LinExpr(-Ho(i));
    for (int k = 0; k < X.n(); ++k) {
      if (HA(i, k) != 0.0) r[i] += HA(i, k) * x(k);
    }
  }
  b.AddLinfBound(t, r);
  X.AddMembership(b, Exprs(x));
  b.Minimize(t);
  const conic::SolverResult res = solver.Solve(b.Build());
  if (!Acceptable(res)) throw SolverError("Estimate", res);
  EstimateResult out;
  out.x_hat = x.Value(res.x);
  out.w_hat = B * out.x_hat;
  out.residual = (HA * out.x_hat - Ho).cwiseAbs().maxCoeff();
  out.status = res.status;
  out.primal_residual = res.primal_residual;
  out.dual_residual = res.dual_residual;
  out.iterations = res.iterations;
  return out;
}

// ------------------------------------------------------------------ oracle

PBoundOracleResult PBoundOracle(const Eigen::Ref<const MatrixXd>& V,
                                const SignalSet& X, OracleSet which,
                                const ContrastMatrix& G,
                                const Eigen::Ref<const MatrixXd>& A,
                                std::mt19937_64& rng, int budget) {
  const int n = X.n();
  if (n > 8) throw std::invalid_argument("PBoundOracle: n must be <= 8");
  if (V.rows() != n || V.cols() != n || A.cols() != n ||
      (!G.empty() && G.rows() != A.rows())) {
    throw std::invalid_argument("PBoundOracle: dimension mismatch");
  }
  const MatrixXd Vs = Symmetrize(V);
  const MatrixXd GA = G.empty() ? MatrixXd(0, n) : MatrixXd(G.H.transpose() * A);
  const PolytopeGauge poly_gauge(X.polytope);
  auto gauge = [&](const VectorXd& x) {
    double g = EllitopeGauge(X.ellitope, x);
    if (which == OracleSet::kSymmetrized) g = std::max(g, poly_gauge(x));
    if (GA.rows()) g = std::max(g, (GA * x).cwiseAbs().maxCoeff());
    return g;
  };
  PBoundOracleResult best;
  best.argmax = VectorXd::Zero(n);
  auto consider = [&](const VectorXd& x) {
    const double v = x.dot(Vs * x);
    if (v > best.value) {
      best.value = v;
      best.argmax = x;
    }
    return v;
  };
  auto to_boundary = [&](const VectorXd& u) -> std::optional<VectorXd> {
    const double g = gauge(u);
    if (!(g > 0.0) || !std::isfinite(g)) return std::nullopt;
    return VectorXd(u / g);
  };
  // Gradient steps plus random perturbations, each retracted radially onto
  // the boundary; the perturbation radius halves when nothing improves, which
  // lets the search slide along edges where the gauge is not smooth.
  std::normal_distribution<double> nd;
  auto ascend = [&](VectorXd x) {
    double val = x.dot(Vs * x);
    double radius = 0.5 * x.norm();
    const double floor = 1e-7 * std::max(1.0, x.norm());
    auto try_point = [&](const VectorXd& u) {
      const auto y = to_boundary(u);
      if (!y) return false;
      const double v = y->dot(Vs * *y);
      if (v <= val + 1e-14 * std::max(1.0, std::abs(val))) return false;
      x = *y;
      val = v;
      return true;
    };
    for (int it = 0; it < 400 && radius > floor; ++it) {
      bool improved = false;
      const VectorXd grad = 2.0 * Vs * x;
      if (grad.norm() > 0.0) {
        improved = try_point(x + radius / grad.norm() * grad);
      }
      for (int k = 0; k < 2 * n && !improved; ++k) {
        const VectorXd d = VectorXd::NullaryExpr(n, [&] { return nd(rng); });
        improved = try_point(x + radius / d.norm() * d);
      }
      radius = improved ? 1.5 * radius : 0.5 * radius;
    }
    consider(x);
  };
  if (which == OracleSet::kSymmetrized) {
    for (const VectorXd& v : X.polytope.Vertices()) {
      if (const auto x = to_boundary(v)) ascend(*x);
    }
  }
  for (int r = 0; r < budget; ++r) {
    const VectorXd u = VectorXd::NullaryExpr(n, [&] { return nd(rng); });
    if (const auto x = to_boundary(u)) ascend(*x);
  }
  return best;
}

VectorXd LeastSquaresBaseline(const Eigen::Ref<const VectorXd>& omega,
                              const Eigen::Ref<const MatrixXd>& A) {
  if (A.rows() != omega.size()) {
    throw std::invalid_argument("LeastSquaresBaseline: dimension mismatch");
  }
  if (A.rows() == A.cols()) {
    Eigen::FullPivLU<MatrixXd> lu(A);
    if (lu.isInvertible()) return lu.solve(omega);
  }
  return A.completeOrthogonalDecomposition().solve(omega);
}

// ----------------------------------------------------------------- sampling

SignalSampler::SignalSampler(SignalSet X, int max_rejections)
    : X_(std::move(X)), vertices_(X_.SamplingVertices()),
      max_rejections_(max_rejections) {
  if (vertices_.empty()) throw std::invalid_argument("SignalSampler: no vertices");
}

VectorXd SignalSampler::Sample(std::mt19937_64& rng) const {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int attempt = 0; attempt < max_rejections_; ++attempt) {
    VectorXd x = VectorXd::Zero(X_.n());
    double total = 0.0;
    for (const VectorXd& v : vertices_) {
      const double w = gamma(rng);
      x += w * v;
      total += w;
    }
    x /= total;
    if (EllitopeMembership(X_.ellitope, x, 0.0)) return x;
  }
  throw SamplerError("SignalSampler: no sample inside the ellitope after " +
                     std::to_string(max_rejections_) + " draws");
}

ObservationModel::ObservationModel(MatrixXd A, double sigma,
                                   std::optional<MixtureModel> mix)
    : A_(std::move(A)), sigma_(sigma), mixture_(std::move(mix)) {}

ObservationModel ObservationModel::Gaussian(MatrixXd A, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  return ObservationModel(std::move(A), sigma, std::nullopt);
}

ObservationModel ObservationModel::Mixture(MixtureModel model) {
  MatrixXd A = model.A();
  return ObservationModel(std::move(A), 0.0, std::move(model));
}

VectorXd ObservationModel::Observe(const Eigen::Ref<const VectorXd>& x,
                                   std::mt19937_64& rng) const {
  if (mixture_) return SampleMixture(*mixture_, x, rng);
  return SampleGaussian(x, A_, sigma_, rng);
}

std::mt19937_64 TrialRng(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial),
                    static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

double EmpiricalQuantile(std::vector<double> values, double epsilon) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("EmpiricalQuantile: epsilon in [0, 1)");
  }
  const double T = static_cast<double>(values.size());
  // Guard the ceiling against (1 - eps) T landing a hair above an integer.
  const double target = (1.0 - epsilon) * T;
  std::size_t k = static_cast<std::size_t>(std::ceil(target - 1e-9 * T));
  k = std::clamp<std::size_t>(k, 1, values.size());
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  return values[k - 1];
}

// ------------------------------------------------------------------- risk

double RiskReport::exceed_rate() const {
  return trials() ? static_cast<double>(exceed) / trials() : 0.0;
}

double RiskReport::standard_error() const {
  return trials() ? std::sqrt(epsilon * (1 - epsilon) / trials()) : 0.0;
}

bool RiskReport::coverage_ok() const {
  return exceed_rate() <= epsilon + 3 * standard_error();
}

int RiskReport::implication_failures() const {
  int bad = 0;
  for (int t = 0; t < trials(); ++t) {
    bad += noise_event[t] && errors[t] > bound;
  }
  return bad;
}

std::vector<RiskReport> SimulateEstimators(
    const SignalSampler& sampler, const ObservationModel& observation,
    const Eigen::Ref<const MatrixXd>& B,
    const std::vector<SimulatedEstimator>& estimators, int trials,
    double theta, double epsilon, std::uint64_t seed) {
  if (trials < 0) throw std::invalid_argument("SimulateEstimators: trials < 0");
  std::vector<RiskReport> reports(estimators.size());
  for (size_t e = 0; e < estimators.size(); ++e) {
    reports[e].name = estimators[e].name;
    reports[e].bound = estimators[e].bound;
    reports[e].epsilon = epsilon;
  }
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng = TrialRng(seed, static_cast<std::uint64_t>(t));
    const VectorXd x = sampler.Sample(rng);
    const VectorXd omega = observation.Observe(x, rng);
    const VectorXd xi = omega - observation.A() * x;
    for (size_t e = 0; e < estimators.size(); ++e) {
      const SimulatedEstimator& est = estimators[e];
      const VectorXd x_hat = est.estimate(omega);
      const double err = ThetaNorm(B * (x_hat - x), theta);
      RiskReport& rep = reports[e];
      rep.errors.push_back(err);
      rep.noise_event.push_back(
          est.H != nullptr &&
          (est.H->empty() ||
           (est.H->H.transpose() * xi).cwiseAbs().maxCoeff() <= 1.0));
      rep.exceed += err > est.bound;
    }
  }
  for (RiskReport& rep : reports) {
    rep.quantile = EmpiricalQuantile(rep.errors, epsilon);
  }
  return reports;
}

RiskReport MonteCarloRisk(const SignalSampler& sampler,
                          const ObservationModel& observation,
                          const Eigen::Ref<const MatrixXd>& B,
                          const ContrastMatrix& H, double bound, int trials,
                          double theta, double epsilon, std::uint64_t seed,
                          const conic::ConicSolver& solver) {
  const MatrixXd A = observation.A();
  const MatrixXd Bm = B;
  SimulatedEstimator est{
      "polyhedral",
      [&](const VectorXd& omega) {
        return Estimate(omega, H, sampler.set(), A, Bm, solver).x_hat;
      },
      bound, &H};
  return SimulateEstimators(sampler, observation, B, {est}, trials, theta,
                            epsilon, seed)
      .front();
}

}  // namespace polyest
