#include "polyest/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>

#include "polyest/errors.hpp"

namespace polyest {

using nlohmann::json;

namespace {

// Random streams of a run, all derived from config.seed through TrialRng.
// Monte-Carlo trial t uses stream t; the instance and the contrast
// assemblies use streams far above any trial count.
constexpr std::uint64_t kInstanceStream = 1ull << 62;
constexpr std::uint64_t kAssemblyStream = (1ull << 62) + 16;

VectorXd DescendingEigenvalues(const MatrixXd& M) {
  if (M.size() == 0) return VectorXd();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Symmetrize(M),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

VectorXd SingularValues(const MatrixXd& M) {
  return Eigen::JacobiSVD<MatrixXd>(M).singularValues();
}

std::string Hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Everything the design loop needs to know about one experiment.
struct DesignSetup {
  std::function<NoiseNorm(double delta)> norm;
  std::function<DesignSolution(double delta, DesignMode mode)> solve;
  int M = 0;  // rows of S_delta
  int J = 0;  // polytope vertices
};

DesignRecord MakeRecord(const std::string& name, const DesignSolution& sol,
                        ContrastMatrix H, double delta) {
  DesignRecord r;
  r.name = name;
  r.mode = sol.mode;
  r.phi_gamma = sol.phi_gamma;
  r.rho = sol.rho;
  r.varsigma = sol.varsigma;
  r.bound = ComputeCertifiedRisk(sol, 0, 0, delta).bound;
  r.delta = delta;
  r.ellitope_columns = H.count(ColumnSide::kEllitope);
  r.polytope_columns = H.count(ColumnSide::kPolytope);
  r.epsilon = r.columns() * delta;
  r.eig_U = DescendingEigenvalues(sol.U);
  r.eig_S = DescendingEigenvalues(sol.S);
  if (sol.U.size() && sol.S.size()) r.eig_US = DescendingEigenvalues(sol.U + sol.S);
  r.H = std::move(H);
  return r;
}

// Solves the full, ellitope-only and polytope-only designs at a common delta.
// Without a fixed delta a pilot full design at epsilon / (M + J) counts the
// contrasts mu; the designs are then re-solved once at epsilon / mu unless
// that adds columns, so every recorded epsilon stays within the target.
std::vector<DesignRecord> RunDesigns(const ExperimentConfig& config,
                                     const DesignSetup& setup) {
  int attempt = 0;
  auto design = [&](double delta, DesignMode mode) {
    DesignSolution sol = setup.solve(delta, mode);
    std::mt19937_64 rng = TrialRng(config.seed, kAssemblyStream + attempt++);
    ContrastMatrix H = AssembleContrast(sol, setup.norm(delta), rng);
    return std::make_pair(std::move(sol), std::move(H));
  };
  double delta = config.delta;
  std::pair<DesignSolution, ContrastMatrix> full;
  if (delta > 0.0) {
    full = design(delta, DesignMode::kFull);
  } else {
    delta = config.epsilon / (setup.M + setup.J);
    full = design(delta, DesignMode::kFull);
    const int mu = full.second.cols();
    if (mu > 0 && mu != setup.M + setup.J) {
      const double retry_delta = config.epsilon / mu;
      auto retry = design(retry_delta, DesignMode::kFull);
      if (retry.second.cols() <= mu) {
        delta = retry_delta;
        full = std::move(retry);
      }
    }
  }
  std::vector<DesignRecord> out;
  out.push_back(MakeRecord("H", full.first, std::move(full.second), delta));
  auto e = design(delta, DesignMode::kEllitopeOnly);
  out.push_back(MakeRecord("E", e.first, std::move(e.second), delta));
  auto p = design(delta, DesignMode::kPolytopeOnly);
  out.push_back(MakeRecord("P", p.first, std::move(p.second), delta));
  return out;
}

// Polyhedral estimate for a recorded design. An empty contrast leaves the
// estimate unconstrained within X, which a single zero column expresses.
SimulatedEstimator PolyhedralEstimator(const DesignRecord& d, const SignalSet& X,
                                       const MatrixXd& A, const MatrixXd& B) {
  ContrastMatrix H = d.H;
  if (H.empty()) {
    H.H = MatrixXd::Zero(A.rows(), 1);
    H.weights = VectorXd::Zero(1);
    H.provenance = {ColumnSide::kPolytope};
  }
  return SimulatedEstimator{
      "x_" + d.name,
      [H, &X, &A, &B](const VectorXd& omega) {
        return Estimate(omega, H, X, A, B).x_hat;
      },
      d.bound, &d.H};
}

void RequireKind(const ExperimentConfig& config, ExperimentKind kind) {
  config.Validate();
  if (config.kind != kind) {
    throw std::invalid_argument(std::string("experiment kind must be ") +
                                ToString(kind));
  }
}

template <typename T>
void Read(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

}  // namespace

const char* ToString(ExperimentKind kind) {
  return kind == ExperimentKind::kL1Ellitope ? "l1-ellitope" : "mixture";
}

ExperimentKind ParseExperimentKind(const std::string& name) {
  if (name == "l1-ellitope") return ExperimentKind::kL1Ellitope;
  if (name == "mixture") return ExperimentKind::kMixture;
  throw std::invalid_argument("unknown experiment kind: " + name);
}

// ------------------------------------------------------------------ config

ExperimentConfig ExperimentConfig::L1Ellitope(int n) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kL1Ellitope;
  c.n = c.m = n;
  c.nu = 2 * n - 2;
  const double s = n / 64.0;
  c.rho1 = 10 * s;
  c.rho2 = 8.5 * s;
  c.rho_inf = 7 * s;
  return c;
}

ExperimentConfig ExperimentConfig::Mixture(int n) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kMixture;
  c.n = c.m = c.nu = n;
  c.rho1 = 1.0;
  c.rho2 = 1.0;
  c.rho_inf = 0.5;
  c.N = 10000;
  return c;
}

void ExperimentConfig::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(n >= 1 && m >= 1 && nu >= 1, "n, m, nu must be >= 1");
  require(rho1 > 0 && rho2 > 0 && rho_inf > 0, "radii must be > 0");
  require(cond_A >= 1 && cond_B >= 1, "condition numbers must be >= 1");
  require(sigma >= 0, "sigma must be >= 0");
  require(N >= 1, "N must be >= 1");
  require(epsilon > 0 && epsilon < 1, "epsilon must be in (0, 1)");
  require(delta >= 0 && delta < 1, "delta must be in [0, 1)");
  require(trials >= 0, "trials must be >= 0");
  if (kind == ExperimentKind::kMixture) {
    require(nu == n, "mixture loss uses B = I, so nu = n");
  } else {
    require(sigma > 0, "sigma must be > 0 for Gaussian noise");
  }
}

json ExperimentConfig::ToJson() const {
  return json{{"kind", ToString(kind)},
              {"n", n},
              {"m", m},
              {"nu", nu},
              {"rho1", rho1},
              {"rho2", rho2},
              {"rho_inf", rho_inf},
              {"cond_A", cond_A},
              {"cond_B", cond_B},
              {"sigma", sigma},
              {"N", N},
              {"epsilon", epsilon},
              {"delta", delta},
              {"trials", trials},
              {"seed", seed},
              {"out_dir", out_dir}};
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::vector<std::string> keys = {
      "kind", "n",     "m",       "nu",    "rho1",   "rho2",
      "rho_inf", "cond_A", "cond_B", "sigma", "N", "epsilon",
      "delta", "trials", "seed", "out_dir"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  const ExperimentKind kind =
      ParseExperimentKind(j.value("kind", std::string("l1-ellitope")));
  const int n = j.value("n", 16);
  ExperimentConfig c = kind == ExperimentKind::kL1Ellitope
                           ? L1Ellitope(n)
                           : Mixture(n);
  Read(j, "m", c.m);
  Read(j, "nu", c.nu);
  Read(j, "rho1", c.rho1);
  Read(j, "rho2", c.rho2);
  Read(j, "rho_inf", c.rho_inf);
  Read(j, "cond_A", c.cond_A);
  Read(j, "cond_B", c.cond_B);
  Read(j, "sigma", c.sigma);
  Read(j, "N", c.N);
  Read(j, "epsilon", c.epsilon);
  Read(j, "delta", c.delta);
  Read(j, "trials", c.trials);
  Read(j, "seed", c.seed);
  Read(j, "out_dir", c.out_dir);
  c.Validate();
  return c;
}

std::string ExperimentConfig::Hash() const {
  json j = ToJson();
  j.erase("out_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return Hex64(h);
}

// ------------------------------------------------------------------ instances

MatrixXd RandomMatrixWithCondition(int rows, int cols, double cond,
                                   std::mt19937_64& rng) {
  if (rows < 1 || cols < 1 || !(cond >= 1.0)) {
    throw std::invalid_argument("RandomMatrixWithCondition: bad arguments");
  }
  std::normal_distribution<double> nd;
  auto haar = [&](int k) {
    const MatrixXd G = MatrixXd::NullaryExpr(k, k, [&] { return nd(rng); });
    Eigen::HouseholderQR<MatrixXd> qr(G);
    MatrixXd Q = qr.householderQ();
    const MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < k; ++i) {
      if (R(i, i) < 0) Q.col(i) *= -1.0;
    }
    return Q;
  };
  const MatrixXd U = haar(rows);
  const MatrixXd V = haar(cols);
  const int r = std::min(rows, cols);
  MatrixXd D = MatrixXd::Zero(rows, cols);
  for (int i = 0; i < r; ++i) {
    D(i, i) = r == 1 ? 1.0 : std::pow(cond, -static_cast<double>(i) / (r - 1));
  }
  return U * D * V.transpose();
}

const DesignRecord& RunRecord::design(const std::string& name) const {
  for (const DesignRecord& d : designs) {
    if (d.name == name) return d;
  }
  throw std::out_of_range("no design named " + name);
}

// ---------------------------------------------------------------- experiments

RunRecord RunExperimentOne(const ExperimentConfig& config) {
  RequireKind(config, ExperimentKind::kL1Ellitope);
  std::mt19937_64 rng = TrialRng(config.seed, kInstanceStream);
  MatrixXd A = RandomMatrixWithCondition(config.m, config.n, config.cond_A, rng);
  MatrixXd B = RandomMatrixWithCondition(config.nu, config.n, config.cond_B, rng);
  const GaussianL1Problem gp{std::move(A), std::move(B), config.rho1,
                             config.rho2, config.rho_inf,
                             GaussianNorm(config.sigma, 0.5, config.m)};
  const DesignProblem problem = gp.ToDesignProblem();

  DesignSetup setup;
  setup.norm = [&](double delta) {
    return GaussianNorm(config.sigma, delta, config.m);
  };
  setup.solve = [&](double delta, DesignMode mode) {
    GaussianL1Problem p = gp;
    p.norm = setup.norm(delta);
    DesignOptions options;
    options.mode = mode;
    return SolveMasterGaussian(p, options);
  };
  setup.M = config.m;
  setup.J = problem.X.polytope.J();

  RunRecord record;
  record.config = config;
  record.hash = config.Hash();
  record.sv_A = SingularValues(gp.A);
  record.sv_B = SingularValues(gp.B);
  try {
    record.designs = RunDesigns(config, setup);
    if (config.trials > 0) {
      const SignalSampler sampler(problem.X);
      const ObservationModel obs = ObservationModel::Gaussian(gp.A, config.sigma);
      std::vector<SimulatedEstimator> estimators;
      for (const DesignRecord& d : record.designs) {
        estimators.push_back(PolyhedralEstimator(d, problem.X, gp.A, gp.B));
      }
      estimators.push_back(SimulatedEstimator{
          "x_LS",
          [&](const VectorXd& omega) {
            return LeastSquaresBaseline(omega, gp.A);
          },
          std::numeric_limits<double>::quiet_NaN(), nullptr});
      record.risks = SimulateEstimators(sampler, obs, gp.B, estimators,
                                        config.trials, 2.0, config.epsilon,
                                        config.seed);
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("experiment l1-ellitope (config " + record.hash +
                             "): " + e.what());
  }
  return record;
}

RunRecord RunExperimentTwo(const ExperimentConfig& config) {
  RequireKind(config, ExperimentKind::kMixture);
  std::mt19937_64 rng = TrialRng(config.seed, kInstanceStream);
  std::normal_distribution<double> nd;
  const int n = config.n, d = config.m;
  std::vector<VectorXd> a;
  std::vector<MatrixXd> Theta;
  for (int i = 0; i < n; ++i) {
    a.push_back(VectorXd::NullaryExpr(d, [&] { return nd(rng); }).normalized());
    const MatrixXd F = MatrixXd::NullaryExpr(d, d, [&] { return nd(rng); });
    const MatrixXd T = F * F.transpose();
    Theta.push_back(T / MaxEigenvalue(T));
  }
  const MixtureModel model(a, Theta, config.N);
  const SignalSet X{Ellitope::BallBox(n, config.rho2, config.rho_inf),
                    PolytopeImage::L1Ball(n, config.rho1),
                    {ExtraConstraint::kProbabilitySimplex}};
  const MatrixXd A = model.A();
  const MatrixXd B = MatrixXd::Identity(n, n);

  DesignSetup setup;
  setup.norm = [&](double delta) { return MixtureNorm(model, delta); };
  setup.solve = [&](double delta, DesignMode mode) {
    DesignProblem p{X, A, B, setup.norm(delta), 1.0};
    DesignOptions options;
    options.mode = mode;
    return SolveMaster(p, options);
  };
  setup.M = d;
  setup.J = X.polytope.J();

  RunRecord record;
  record.config = config;
  record.hash = config.Hash();
  record.sv_A = SingularValues(A);
  record.sv_B = SingularValues(B);
  try {
    record.designs = RunDesigns(config, setup);
    if (config.trials > 0) {
      const SignalSampler sampler(X);
      const ObservationModel obs = ObservationModel::Mixture(model);
      std::vector<SimulatedEstimator> estimators;
      for (const DesignRecord& dr : record.designs) {
        estimators.push_back(PolyhedralEstimator(dr, X, A, B));
      }
      record.risks = SimulateEstimators(sampler, obs, B, estimators,
                                        config.trials, 1.0, config.epsilon,
                                        config.seed);
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("experiment mixture (config " + record.hash +
                             "): " + e.what());
  }
  return record;
}

RunRecord RunExperiment(const ExperimentConfig& config) {
  return config.kind == ExperimentKind::kL1Ellitope ? RunExperimentOne(config)
                                                    : RunExperimentTwo(config);
}

}  // namespace polyest
