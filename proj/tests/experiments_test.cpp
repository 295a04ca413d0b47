#include "polyest/experiments.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

namespace polyest {
namespace {

namespace fs = std::filesystem;

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int Count(const std::string& text, const std::string& needle) {
  int c = 0;
  for (size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + 1)) {
    ++c;
  }
  return c;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("polyest_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig SmallOne(int trials) {
  ExperimentConfig c = ExperimentConfig::L1Ellitope(8);
  c.trials = trials;
  c.seed = 7;
  return c;
}

TEST(ExperimentConfig, Defaults) {
  const ExperimentConfig one = ExperimentConfig::L1Ellitope(64);
  EXPECT_EQ(one.nu, 126);
  EXPECT_DOUBLE_EQ(one.rho1, 10.0);
  EXPECT_DOUBLE_EQ(one.rho2, 8.5);
  EXPECT_DOUBLE_EQ(one.rho_inf, 7.0);
  EXPECT_DOUBLE_EQ(one.sigma, 0.01);
  EXPECT_DOUBLE_EQ(one.cond_A, 1e3);
  EXPECT_DOUBLE_EQ(one.cond_B, 8.0);
  const ExperimentConfig two = ExperimentConfig::Mixture(32);
  EXPECT_EQ(two.N, 10000);
  EXPECT_EQ(two.m, 32);
  EXPECT_EQ(two.nu, 32);
  EXPECT_DOUBLE_EQ(two.rho2, 1.0);
  EXPECT_DOUBLE_EQ(two.rho_inf, 0.5);
}

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentConfig c = ExperimentConfig::Mixture(6);
  c.seed = 123456789012345ull;
  c.trials = 17;
  c.epsilon = 0.05;
  const ExperimentConfig back = ExperimentConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
  EXPECT_EQ(back.Hash(), c.Hash());
}

TEST(ExperimentConfig, PartialJsonTakesKindDefaults) {
  const auto c = ExperimentConfig::FromJson(
      nlohmann::json{{"kind", "l1-ellitope"}, {"n", 32}, {"trials", 5}});
  EXPECT_EQ(c.nu, 62);
  EXPECT_DOUBLE_EQ(c.rho1, 5.0);
  EXPECT_EQ(c.trials, 5);
}

TEST(ExperimentConfig, RejectsBadInput) {
  EXPECT_THROW(ExperimentConfig::FromJson(nlohmann::json{{"bogus", 1}}),
               std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::FromJson(nlohmann::json{{"kind", "other"}}),
               std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::FromJson(nlohmann::json{{"epsilon", 1.5}}),
               std::invalid_argument);
  EXPECT_THROW(
      ExperimentConfig::FromJson(nlohmann::json{{"kind", "mixture"}, {"nu", 3}}),
      std::invalid_argument);
}

TEST(ExperimentConfig, HashIgnoresOutputDirectory) {
  ExperimentConfig a = SmallOne(3), b = SmallOne(3);
  b.out_dir = "elsewhere";
  EXPECT_EQ(a.Hash(), b.Hash());
  EXPECT_EQ(a.Hash().size(), 16u);
  b.seed = 8;
  EXPECT_NE(a.Hash(), b.Hash());
}

TEST(RandomMatrixWithCondition, ExactConditionNumber) {
  std::mt19937_64 rng(1);
  for (auto [r, c] : {std::pair{6, 6}, std::pair{10, 6}, std::pair{4, 7}}) {
    const MatrixXd M = RandomMatrixWithCondition(r, c, 1e3, rng);
    const VectorXd s = Eigen::JacobiSVD<MatrixXd>(M).singularValues();
    EXPECT_NEAR(s(0), 1.0, 1e-12);
    EXPECT_NEAR(s(0) / s(s.size() - 1), 1e3, 1e-8);
    // Log-spaced singular values.
    for (Eigen::Index i = 1; i + 1 < s.size(); ++i) {
      EXPECT_NEAR(std::log(s(i - 1) / s(i)), std::log(s(i) / s(i + 1)), 1e-9);
    }
  }
  EXPECT_THROW(RandomMatrixWithCondition(3, 3, 0.5, rng), std::invalid_argument);
}

TEST(RunExperimentOne, DesignOnlyRecord) {
  const RunRecord r = RunExperimentOne(SmallOne(0));
  EXPECT_TRUE(r.risks.empty());
  ASSERT_EQ(r.designs.size(), 3u);
  const double target = r.config.epsilon;
  for (const DesignRecord& d : r.designs) {
    EXPECT_TRUE(std::isfinite(d.bound));
    // Bound consistency and epsilon bookkeeping.
    EXPECT_NEAR(d.bound, 2 * std::sqrt(d.phi_gamma + d.rho + d.varsigma), 1e-12);
    EXPECT_DOUBLE_EQ(d.epsilon, d.H.cols() * d.delta);
    EXPECT_LE(d.epsilon, target * (1 + 1e-12));
  }
  const double full = r.design("H").bound, e = r.design("E").bound,
               p = r.design("P").bound;
  EXPECT_LE(full, std::min(e, p) + 1e-6);
  EXPECT_EQ(r.design("E").polytope_columns, 0);
  EXPECT_EQ(r.design("P").ellitope_columns, 0);
  EXPECT_EQ(r.sv_A.size(), 8);
  EXPECT_NEAR(r.sv_A(0) / r.sv_A(7), 1e3, 1e-6);
}

TEST(RunExperimentOne, CoverageAndNoiseEventImplication) {
  const RunRecord r = RunExperimentOne(SmallOne(40));
  ASSERT_EQ(r.risks.size(), 4u);
  for (const RiskReport& rep : r.risks) {
    ASSERT_EQ(rep.trials(), 40);
    for (double e : rep.errors) EXPECT_TRUE(std::isfinite(e));
    if (rep.name == "x_LS") {
      EXPECT_TRUE(std::isnan(rep.bound));
      continue;
    }
    EXPECT_TRUE(rep.coverage_ok()) << rep.name;
    EXPECT_EQ(rep.implication_failures(), 0) << rep.name;
  }
}

TEST(RunExperimentOne, RejectsWrongKind) {
  EXPECT_THROW(RunExperimentOne(ExperimentConfig::Mixture(4)),
               std::invalid_argument);
  EXPECT_THROW(RunExperimentTwo(SmallOne(0)), std::invalid_argument);
}

TEST(RunExperimentTwo, SmallMixture) {
  ExperimentConfig c = ExperimentConfig::Mixture(4);
  c.trials = 20;
  c.seed = 3;
  const RunRecord r = RunExperimentTwo(c);
  ASSERT_EQ(r.designs.size(), 3u);
  const double full = r.design("H").bound;
  EXPECT_LE(full, r.design("E").bound + 1e-6);
  EXPECT_LE(full, r.design("P").bound + 1e-6);
  ASSERT_EQ(r.risks.size(), 3u);
  for (const RiskReport& rep : r.risks) {
    EXPECT_TRUE(rep.coverage_ok()) << rep.name;
    EXPECT_EQ(rep.implication_failures(), 0) << rep.name;
  }
}

TEST(RunExperimentTwo, UniformSignalEndToEnd) {
  ExperimentConfig c = ExperimentConfig::Mixture(4);
  c.trials = 0;
  const RunRecord r = RunExperimentTwo(c);
  // Rebuild the model from the same instance stream the run used.
  std::mt19937_64 rng = TrialRng(c.seed, 1ull << 62);
  std::normal_distribution<double> nd;
  std::vector<VectorXd> a;
  std::vector<MatrixXd> Theta;
  for (int i = 0; i < c.n; ++i) {
    a.push_back(VectorXd::NullaryExpr(c.m, [&] { return nd(rng); }).normalized());
    const MatrixXd F = MatrixXd::NullaryExpr(c.m, c.m, [&] { return nd(rng); });
    const MatrixXd T = F * F.transpose();
    Theta.push_back(T / MaxEigenvalue(T));
  }
  const MixtureModel model(a, Theta, c.N);
  const SignalSet X{Ellitope::BallBox(c.n, c.rho2, c.rho_inf),
                    PolytopeImage::L1Ball(c.n, c.rho1),
                    {ExtraConstraint::kProbabilitySimplex}};
  const VectorXd x = VectorXd::Constant(c.n, 1.0 / c.n);
  ASSERT_TRUE(X.Contains(x));
  std::mt19937_64 noise(5);
  const VectorXd omega = SampleMixture(model, x, noise);
  const EstimateResult est = Estimate(omega, r.design("H").H, X, model.A(),
                                      MatrixXd::Identity(c.n, c.n));
  EXPECT_TRUE(std::isfinite((est.x_hat - x).lpNorm<1>()));
}

TEST(EmitReport, EmptyRecordWritesHeaderOnlyCsv) {
  RunRecord r;
  r.config = SmallOne(0);
  r.hash = r.config.Hash();
  const fs::path dir = TempDir("empty");
  const auto files = EmitReport(r, dir);
  ASSERT_EQ(files.size(), 6u);
  EXPECT_EQ(ReadFile(files[0]), "trial,estimator,error,bound,covered,noise_event\n");
  EXPECT_EQ(Count(ReadFile(files[4]), "<g class=\"box\">"), 0);
  for (const auto& f : files) {
    EXPECT_EQ(f.filename().string().rfind("l1-ellitope-" + r.hash, 0), 0u);
  }
}

TEST(EmitReport, OneBoxPerEstimator) {
  RunRecord r;
  r.config = SmallOne(2);
  r.hash = r.config.Hash();
  for (const char* name : {"a", "b", "c"}) {
    RiskReport rep;
    rep.name = name;
    rep.errors = {0.1, 0.2, 0.4};
    rep.noise_event = {true, true, false};
    rep.bound = 0.3;
    rep.epsilon = 0.1;
    r.risks.push_back(rep);
  }
  const auto files = EmitReport(r, TempDir("boxes"));
  const std::string svg = ReadFile(files[4]);
  EXPECT_EQ(Count(svg, "<g class=\"box\">"), 3);
  const std::string csv = ReadFile(files[0]);
  EXPECT_EQ(Count(csv, "\n"), 1 + 9);
  EXPECT_NE(csv.find("2,a,0.4,0.3,0,0\n"), std::string::npos);
  const auto summary = nlohmann::json::parse(ReadFile(files[3]));
  EXPECT_EQ(summary.at("risk").size(), 3u);
}

TEST(EmitReport, RerunIsByteIdentical) {
  const ExperimentConfig c = SmallOne(5);
  const auto a = EmitReport(RunExperiment(c), TempDir("det_a"));
  const auto b = EmitReport(RunExperiment(c), TempDir("det_b"));
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].filename(), b[i].filename());
    EXPECT_EQ(ReadFile(a[i]), ReadFile(b[i])) << a[i];
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(FormatDouble(0.1), "0.1");
  EXPECT_EQ(FormatDouble(1e-300), "1e-300");
  EXPECT_EQ(FormatDouble(2.0), "2");
  const double v = 1.0 / 3.0;
  EXPECT_EQ(std::stod(FormatDouble(v)), v);
  EXPECT_EQ(FormatDouble(std::nan("")), "nan");
}

}  // namespace
}  // namespace polyest
