#include "polyest/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "polyest/cone_decomposition.hpp"
#include "polyest/design.hpp"
#include "polyest/estimator.hpp"
#include "polyest/experiments.hpp"

namespace polyest {
namespace {

namespace fs = std::filesystem;

MatrixXd Gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return MatrixXd::NullaryExpr(rows, cols, [&] { return nd(rng); });
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// Ball of a general z-space norm: random PSD S_l of random rank, the first
// made definite, over a box with upper bounds in [0.5, 2].
NoiseNorm RandomBall(int M, int L, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  std::uniform_int_distribution<int> rank(1, M);
  std::vector<MatrixXd> S;
  for (int l = 0; l < L; ++l) {
    const MatrixXd F = Gaussian(rank(rng), M, rng);
    S.push_back(F.transpose() * F);
  }
  S.front() += 0.1 * MatrixXd::Identity(M, M);
  const VectorXd upper = VectorXd::NullaryExpr(L, [&] { return unif(rng); });
  return NoiseNorm(MatrixXd::Identity(M, M), S, MonotoneSet::Box(upper),
                   NoiseKind::kGeneral, 0.05);
}

// Random PSD Xi with rho the smallest value making (Xi, rho) a cone member.
std::pair<MatrixXd, double> RandomMember(const NoiseNorm& norm,
                                         std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rank(1, norm.M());
  const MatrixXd F = Gaussian(norm.M(), rank(rng), rng);
  const MatrixXd Xi = F * F.transpose();
  double rho = 0;
  for (int l = 0; l < norm.L(); ++l) {
    rho = std::max(rho, Xi.cwiseProduct(norm.S_ell()[l]).sum() /
                            norm.domain().upper_bounds()(l));
  }
  return {Xi, rho * KappaConst(norm.M(), norm.L())};
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Check {
  bool passed = false;
  std::string detail;
};

Check Decomposition(std::mt19937_64& rng) {
  const int Ms[] = {2, 4, 8, 16}, Ls[] = {1, 4, 8};
  double worst_sum = 0, worst_gauge = 0, worst_rec = 0;
  int failures = 0;
  for (int t = 0; t < 200; ++t) {
    const int M = Ms[t % 4], L = Ls[(t / 4) % 3];
    const NoiseNorm norm = RandomBall(M, L, rng);
    const auto [Xi, rho] = RandomMember(norm, rng);
    try {
      const RankOneDecomposition d = ExtractRankOne(norm, Xi, rho, rng);
      double gauge = 0;
      for (int j = 0; j < d.size(); ++j) {
        gauge = std::max(gauge, norm.ZGauge(d.G.col(j)));
      }
      const double sum_ratio = d.lambdas.sum() / rho;
      const double rec = (Xi - d.Reconstruct()).norm() / Xi.norm();
      worst_sum = std::max(worst_sum, sum_ratio);
      worst_gauge = std::max(worst_gauge, gauge);
      worst_rec = std::max(worst_rec, rec);
      if (sum_ratio > 1 + 1e-12 || gauge > 1 + 1e-8 || rec > 1e-8) ++failures;
    } catch (const ExtractionError&) {
      ++failures;
    }
  }
  return {failures == 0,
          Fmt("200 members, failures %d, max sum(lambda)/rho %.6g, max gauge "
              "%.10g, max rel reconstruction %.3g",
              failures, worst_sum, worst_gauge, worst_rec)};
}

Check AcceptanceRate(std::mt19937_64& rng) {
  const int T = 400;
  const double threshold = 0.5 - 3 * std::sqrt(0.25 / T);
  const std::pair<int, int> sizes[] = {{4, 1}, {6, 3}, {8, 4}, {16, 8}};
  bool ok = true;
  std::string rates;
  for (auto [M, L] : sizes) {
    const NoiseNorm norm = RandomBall(M, L, rng);
    const auto [Xi, rho] = RandomMember(norm, rng);
    const MatrixXd Z = PsdSqrt(Xi);
    const MatrixXd O = DctMatrix(M);
    int accepted = 0;
    for (int t = 0; t < T; ++t) {
      accepted += RunExtractionTrial(norm, Z, rho, O, rng).accepted;
    }
    const double rate = static_cast<double>(accepted) / T;
    ok = ok && rate >= threshold;
    rates += Fmt("%s(M=%d,L=%d) %.4f", rates.empty() ? "" : ", ", M, L, rate);
  }
  return {ok, Fmt("rates %s, threshold %.4f", rates.c_str(), threshold)};
}

Check ForwardCone(std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  int failures = 0;
  for (int t = 0; t < 100; ++t) {
    const int M = 2 + t % 5, L = 1 + t % 4;
    const NoiseNorm norm = RandomBall(M, L, rng);
    MatrixXd Xi = MatrixXd::Zero(M, M);
    double total = 0;
    for (int j = 0; j < 1 + t % 6; ++j) {
      VectorXd g = Gaussian(M, 1, rng).col(0);
      g /= norm.ZGauge(g);
      const double lambda = ex(rng);
      Xi += lambda * g * g.transpose();
      total += lambda;
    }
    if (!ConeCheck(norm, Xi, KappaConst(M, L) * total).has_value()) ++failures;
  }
  return {failures == 0, Fmt("100 mixtures, %d rejected", failures)};
}

Check Duality(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 6), pickK(1, 3), pickJ(1, 4);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = std::max(2, size(rng)), q = size(rng);
    const int p = std::uniform_int_distribution<int>(q, 6)(rng);
    const int K = pickK(rng), J = pickJ(rng);
    const int N = std::uniform_int_distribution<int>(n, n + 2)(rng);
    std::vector<MatrixXd> T;
    for (int k = 0; k < K; ++k) {
      const MatrixXd F = Gaussian(N, N, rng);
      T.push_back(F.transpose() * F / N);
    }
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    const VectorXd up = VectorXd::NullaryExpr(K, [&] { return unif(rng); });
    const Ellitope ellitope(Gaussian(n, N, rng), T, MonotoneSet::Box(up));
    const PolytopeImage polytope(Gaussian(n, q, rng), Gaussian(p, q, rng),
                                 Gaussian(p, J, rng));
    const VectorXd d = Gaussian(p, 1, rng).col(0);
    for (bool full : {false, true}) {
      const YbarValue v = DualMaxOverYbar(d, ellitope, polytope, full);
      worst = std::max(worst, std::abs(v.primal - v.dual) /
                                  (1 + std::abs(v.primal)));
    }
  }
  return {worst <= 1e-6,
          Fmt("50 instances (thin and full dual), max |primal-dual|/(1+|v|) "
              "%.3g",
              worst)};
}

double Radicand(const DesignRecord& d) { return d.phi_gamma + d.rho + d.varsigma; }

Check Dominance(std::uint64_t seed) {
  double worst = -1e300;
  int failures = 0;
  for (int t = 0; t < 20; ++t) {
    ExperimentConfig c = t < 10 ? ExperimentConfig::L1Ellitope(16)
                                : ExperimentConfig::Mixture(8);
    c.trials = 0;
    c.seed = seed + t;
    const RunRecord r = RunExperiment(c);
    const double full = Radicand(r.design("H"));
    const double best =
        std::min(Radicand(r.design("E")), Radicand(r.design("P")));
    worst = std::max(worst, full - best);
    if (full > best + 1e-6) ++failures;
  }
  return {failures == 0,
          Fmt("20 instances, failures %d, max Opt_full - min(Opt_E, Opt_P) "
              "%.3g",
              failures, worst)};
}

Check Coverage(std::uint64_t seed) {
  ExperimentConfig c = ExperimentConfig::L1Ellitope(16);
  c.trials = 300;
  c.seed = seed;
  const RunRecord r = RunExperimentOne(c);
  bool ok = true;
  std::string parts;
  for (const RiskReport& rep : r.risks) {
    if (rep.name == "x_LS") continue;
    ok = ok && rep.coverage_ok();
    parts += Fmt("%s%s %d/%d exceed (bound %.4g, limit rate %.4g)",
                 parts.empty() ? "" : "; ", rep.name.c_str(), rep.exceed,
                 rep.trials(), rep.bound,
                 rep.epsilon + 3 * rep.standard_error());
  }
  return {ok, parts};
}

Check OracleSandwich(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 6);
  double worst_u = -1e300, worst_s = -1e300;
  int failures = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = size(rng);
    const double scale = n / 64.0;
    const GaussianL1Problem gp{Gaussian(n, n, rng) / std::sqrt(n),
                               Gaussian(n, n, rng) / std::sqrt(n),
                               10 * scale,
                               8.5 * scale,
                               7 * scale,
                               GaussianNorm(0.05, 0.01 / (2 * n), n)};
    const DesignProblem p = gp.ToDesignProblem();
    const DesignSolution sol = SolveMaster(p);
    const ContrastMatrix H = AssembleContrast(sol, p.norm, rng);
    const double u = PBoundOracle(sol.U, p.X, OracleSet::kEllitope,
                                  H.Select(ColumnSide::kEllitope), p.A, rng, 40)
                         .value;
    const double s = PBoundOracle(sol.S, p.X, OracleSet::kSymmetrized,
                                  H.Select(ColumnSide::kPolytope), p.A, rng, 40)
                         .value;
    const double du = u - (sol.phi_gamma + sol.rho), ds = s - sol.varsigma;
    worst_u = std::max(worst_u, du);
    worst_s = std::max(worst_s, ds);
    if (du > 1e-6 || ds > 1e-6) ++failures;
  }
  return {failures == 0,
          Fmt("50 instances, failures %d, max oracle-bound: U-part %.3g, "
              "S-part %.3g",
              failures, worst_u, worst_s)};
}

Check TailBounds(std::mt19937_64& rng) {
  const int n = 3, d = 3, N = 100, T = 100000;
  std::vector<VectorXd> a;
  std::vector<MatrixXd> Theta;
  for (int i = 0; i < n; ++i) {
    a.push_back(Gaussian(d, 1, rng).col(0).normalized());
    const MatrixXd F = Gaussian(d, d, rng);
    const MatrixXd S = F * F.transpose();
    Theta.push_back(S / MaxEigenvalue(S));
  }
  const MixtureModel model(a, Theta, N);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  VectorXd x = VectorXd::NullaryExpr(n, [&] { return gamma(rng); });
  x /= x.sum();
  std::vector<VectorXd> hs;
  for (int k = 0; k < 3; ++k) hs.push_back(Gaussian(d, 1, rng).col(0).normalized());
  const double taus[] = {0.05, 0.1, 0.2};
  std::vector<int> hits(hs.size() * 3, 0);
  const VectorXd ax = model.A() * x;
  for (int t = 0; t < T; ++t) {
    const VectorXd xi = SampleMixture(model, x, rng) - ax;
    for (size_t k = 0; k < hs.size(); ++k) {
      const double v = std::abs(hs[k].dot(xi));
      for (int i = 0; i < 3; ++i) hits[k * 3 + i] += v > taus[i];
    }
  }
  bool ok = true;
  std::string parts;
  for (size_t k = 0; k < hs.size(); ++k) {
    for (int i = 0; i < 3; ++i) {
      const double bound = std::min(1.0, TailBound(model, hs[k], taus[i]));
      const double se = std::sqrt(bound * (1 - bound) / T);
      const double freq = static_cast<double>(hits[k * 3 + i]) / T;
      ok = ok && freq <= bound + 3 * se;
      if (k == 0) {
        parts += Fmt("%stau=%.2g: %.4g <= %.4g", parts.empty() ? "" : ", ",
                     taus[i], freq, bound);
      }
    }
  }
  return {ok, Fmt("3 directions x 3 levels, 1e5 draws; first direction %s",
                  parts.c_str())};
}

Check FigurePattern(std::uint64_t seed) {
  ExperimentConfig c = ExperimentConfig::Mixture(8);
  c.trials = 0;
  c.seed = seed;
  const RunRecord r = RunExperimentTwo(c);
  const double h = r.design("H").bound, e = r.design("E").bound,
               p = r.design("P").bound;
  // Bounds come from designs solved to 1e-6; ties within that are accepted.
  const double tol = 1e-6;
  return {h <= p + tol && h <= e + tol,
          Fmt("bound H %.9g, P %.9g, E %.9g", h, p, e)};
}

Check Determinism(std::uint64_t seed, const fs::path& scratch) {
  ExperimentConfig one = ExperimentConfig::L1Ellitope(8);
  one.trials = 20;
  one.seed = seed;
  ExperimentConfig two = ExperimentConfig::Mixture(4);
  two.trials = 20;
  two.seed = seed;
  int compared = 0, differing = 0;
  for (const ExperimentConfig& c : {one, two}) {
    const fs::path da = scratch / "a", db = scratch / "b";
    fs::remove_all(da);
    fs::remove_all(db);
    const auto fa = EmitReport(RunExperiment(c), da);
    const auto fb = EmitReport(RunExperiment(c), db);
    for (size_t i = 0; i < fa.size(); ++i) {
      ++compared;
      if (i >= fb.size() || fa[i].filename() != fb[i].filename() ||
          ReadFile(fa[i]) != ReadFile(fb[i])) {
        ++differing;
      }
    }
  }
  fs::remove_all(scratch);
  return {differing == 0 && compared > 0,
          Fmt("%d report files compared across both experiments, %d differ",
              compared, differing)};
}

}  // namespace

std::string CriterionResult::Line() const {
  std::string line = Fmt("%s %2d %s: ", passed ? "PASS" : "FAIL", id, name.c_str());
  line += detail;
  line += limit_seconds > 0 ? Fmt(" (%.1f s, limit %.0f s)", seconds, limit_seconds)
                            : Fmt(" (%.1f s)", seconds);
  return line;
}

std::vector<CriterionResult> RunAcceptance(const AcceptanceOptions& options) {
  const std::uint64_t seed = options.seed;
  auto rng = [seed](int id) { return TrialRng(seed, 1000 + id); };
  struct Entry {
    int id;
    const char* name;
    double limit;
    std::function<Check()> run;
  };
  const std::vector<Entry> entries = {
      {1, "decomposition-exactness", 30,
       [&] { auto r = rng(1); return Decomposition(r); }},
      {2, "acceptance-probability", 60,
       [&] { auto r = rng(2); return AcceptanceRate(r); }},
      {3, "forward-cone", 10, [&] { auto r = rng(3); return ForwardCone(r); }},
      {4, "conic-duality", 120, [&] { auto r = rng(4); return Duality(r); }},
      {5, "design-dominance", 600, [&] { return Dominance(seed); }},
      {6, "risk-coverage", 900, [&] { return Coverage(seed); }},
      {7, "oracle-sandwich", 300,
       [&] { auto r = rng(7); return OracleSandwich(r); }},
      {8, "tail-bound", 120, [&] { auto r = rng(8); return TailBounds(r); }},
      {9, "mixture-bound-ordering", 600, [&] { return FigurePattern(seed); }},
      {10, "determinism", 0,
       [&] { return Determinism(seed, options.scratch); }},
  };
  std::vector<CriterionResult> results;
  for (const Entry& e : entries) {
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), e.id) ==
            options.only.end()) {
      continue;
    }
    CriterionResult res{e.id, e.name, false, "", 0.0, e.limit};
    const auto start = std::chrono::steady_clock::now();
    try {
      const Check c = e.run();
      res.passed = c.passed;
      res.detail = c.detail;
    } catch (const std::exception& ex) {
      res.detail = std::string("error: ") + ex.what();
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                start)
                      .count();
    if (e.limit > 0 && res.seconds > e.limit) {
      res.passed = false;
      res.detail += "; over the runtime limit";
    }
    if (options.on_result) options.on_result(res);
    results.push_back(res);
  }
  return results;
}

}  // namespace polyest
