#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polyest/acceptance.hpp"
#include "polyest/design.hpp"
#include "polyest/estimator.hpp"
#include "polyest/experiments.hpp"

namespace polyest {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

MatrixXd ToMatrix(const json& j, const char* what) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  MatrixXd M(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw std::invalid_argument(std::string(what) + " has ragged rows");
    }
    for (size_t k = 0; k < rows[i].size(); ++k) M(i, k) = rows[i][k];
  }
  return M;
}

json FromMatrix(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    rows.push_back(row);
  }
  return rows;
}

json FromVector(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd ToVector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Observation scheme, signal set and loss read from an instance descriptor.
struct Instance {
  bool mixture = false;
  MatrixXd A;
  MatrixXd B;
  double sigma = 0.0;
  std::optional<MixtureModel> model;
  double rho1 = 0.0, rho2 = 0.0, rho_inf = 0.0;
  SignalSet X;

  NoiseNorm Norm(double delta) const {
    return mixture ? MixtureNorm(*model, delta)
                   : GaussianNorm(sigma, delta, static_cast<int>(A.rows()));
  }
  ObservationModel Observation() const {
    return mixture ? ObservationModel::Mixture(*model)
                   : ObservationModel::Gaussian(A, sigma);
  }
};

Instance LoadInstance(const std::string& path) {
  const json j = ReadJson(path);
  static const std::vector<std::string> keys = {
      "model", "A", "sigma", "a", "Theta", "N", "B",
      "rho1",  "rho2", "rho_inf", "simplex"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw std::invalid_argument("instance: unknown key '" + key + "'");
    }
  }
  const std::string kind = j.value("model", std::string("gaussian"));
  const bool mixture = kind == "mixture";
  if (!mixture && kind != "gaussian") {
    throw std::invalid_argument("instance: model must be gaussian or mixture");
  }
  MatrixXd A;
  double sigma = 0.0;
  std::optional<MixtureModel> model;
  if (mixture) {
    std::vector<VectorXd> a;
    for (const auto& ai : j.at("a")) a.push_back(ToVector(ai.get<std::vector<double>>()));
    std::vector<MatrixXd> Theta;
    for (const auto& t : j.at("Theta")) Theta.push_back(ToMatrix(t, "Theta"));
    model.emplace(a, Theta, j.at("N").get<int>());
    A = model->A();
  } else {
    A = ToMatrix(j.at("A"), "A");
    sigma = j.at("sigma").get<double>();
  }
  const int n = static_cast<int>(A.cols());
  MatrixXd B = j.contains("B") ? ToMatrix(j.at("B"), "B") : MatrixXd::Identity(n, n);
  std::vector<ExtraConstraint> extras;
  if (j.value("simplex", mixture)) {
    extras.push_back(ExtraConstraint::kProbabilitySimplex);
  }
  const double rho1 = j.at("rho1").get<double>();
  const double rho2 = j.at("rho2").get<double>();
  const double rho_inf = j.at("rho_inf").get<double>();
  SignalSet X{Ellitope::BallBox(n, rho2, rho_inf), PolytopeImage::L1Ball(n, rho1),
              extras};
  return Instance{mixture, std::move(A), std::move(B), sigma, std::move(model),
                  rho1, rho2, rho_inf, std::move(X)};
}

std::string ContrastCsv(const ContrastMatrix& H) {
  std::string out = "column,side,weight";
  for (int i = 0; i < H.rows(); ++i) out += ",h" + std::to_string(i);
  out += "\n";
  for (int j = 0; j < H.cols(); ++j) {
    out += std::to_string(j) + "," + ToString(H.provenance[j]) + "," +
           FormatDouble(H.weights(j));
    for (int i = 0; i < H.rows(); ++i) out += "," + FormatDouble(H.H(i, j));
    out += "\n";
  }
  return out;
}

ContrastMatrix ReadContrastCsv(const fs::path& path, int m, double delta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<VectorXd> cols;
  std::vector<ColumnSide> sides;
  std::vector<double> weights;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream s(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != 3 + m) {
      throw std::invalid_argument("contrast CSV row has the wrong length");
    }
    sides.push_back(cells[1] == ToString(ColumnSide::kEllitope)
                        ? ColumnSide::kEllitope
                        : ColumnSide::kPolytope);
    weights.push_back(std::stod(cells[2]));
    VectorXd h(m);
    for (int i = 0; i < m; ++i) h(i) = std::stod(cells[3 + i]);
    cols.push_back(h);
  }
  ContrastMatrix H = ContrastMatrix::Empty(m, delta);
  H.H.resize(m, static_cast<Eigen::Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j) H.H.col(j) = cols[j];
  H.provenance = sides;
  H.weights = ToVector(weights);
  return H;
}

// A design bundle is <prefix>.json plus <prefix>-H.csv.
struct Bundle {
  json meta;
  ContrastMatrix H;
};

Bundle LoadBundle(const std::string& prefix, const Instance& inst) {
  Bundle b;
  b.meta = ReadJson(prefix + ".json");
  b.H = ReadContrastCsv(prefix + "-H.csv", static_cast<int>(inst.A.rows()),
                        b.meta.at("delta").get<double>());
  if (b.H.empty()) {
    // Unconstrained within X: one zero column.
    b.H.H = MatrixXd::Zero(inst.A.rows(), 1);
    b.H.weights = VectorXd::Zero(1);
    b.H.provenance = {ColumnSide::kPolytope};
  }
  return b;
}

int CmdDesign(const std::string& instance_path, double delta, double theta,
              const std::string& mode, std::uint64_t seed,
              const std::string& out) {
  const Instance inst = LoadInstance(instance_path);
  DesignOptions options;
  options.mode = ParseDesignMode(mode);
  const NoiseNorm norm = inst.Norm(delta);
  // The specialized Gaussian program covers theta = 2 without the simplex.
  const DesignSolution sol =
      !inst.mixture && theta == 2.0 && !inst.X.has_simplex()
          ? SolveMasterGaussian(GaussianL1Problem{inst.A, inst.B, inst.rho1,
                                                  inst.rho2, inst.rho_inf, norm},
                                options)
          : SolveMaster(DesignProblem{inst.X, inst.A, inst.B, norm, theta},
                        options);
  std::mt19937_64 rng = TrialRng(seed, 0);
  const ContrastMatrix H = AssembleContrast(sol, norm, rng);
  const CertifiedRisk risk = ComputeCertifiedRisk(
      sol, H.count(ColumnSide::kEllitope), H.count(ColumnSide::kPolytope), delta);
  const json meta{{"mode", ToString(sol.mode)},
                  {"theta", theta},
                  {"delta", delta},
                  {"epsilon", risk.epsilon},
                  {"bound", risk.bound},
                  {"phi_gamma", sol.phi_gamma},
                  {"rho", sol.rho},
                  {"varsigma", sol.varsigma},
                  {"objective", sol.objective},
                  {"iterations", sol.iterations},
                  {"ellitope_columns", H.count(ColumnSide::kEllitope)},
                  {"polytope_columns", H.count(ColumnSide::kPolytope)},
                  {"seed", seed},
                  {"U", FromMatrix(sol.U)},
                  {"S", FromMatrix(sol.S)}};
  WriteText(out + ".json", meta.dump(2) + "\n");
  WriteText(out + "-H.csv", ContrastCsv(H));
  std::printf("epsilon %s bound %s columns %d\nwrote %s.json %s-H.csv\n",
              FormatDouble(risk.epsilon).c_str(), FormatDouble(risk.bound).c_str(),
              H.cols(), out.c_str(), out.c_str());
  return 0;
}

VectorXd ParseOmega(const std::string& text) {
  std::vector<double> v;
  std::stringstream s(text);
  std::string cell;
  while (std::getline(s, cell, ',')) {
    if (cell.find_first_not_of(" \t\r\n") != std::string::npos) {
      v.push_back(std::stod(cell));
    }
  }
  return ToVector(v);
}

int CmdEstimate(const std::string& instance_path, const std::string& design,
                std::string omega_text, const std::string& omega_file) {
  const Instance inst = LoadInstance(instance_path);
  const Bundle b = LoadBundle(design, inst);
  if (!omega_file.empty()) {
    std::ifstream in(omega_file);
    if (!in) throw std::runtime_error("cannot open " + omega_file);
    std::stringstream s;
    s << in.rdbuf();
    omega_text = s.str();
    for (char& c : omega_text) {
      if (c == '\n') c = ',';
    }
  }
  const VectorXd omega = ParseOmega(omega_text);
  if (omega.size() != inst.A.rows()) {
    throw std::invalid_argument("omega must have " + std::to_string(inst.A.rows()) +
                                " entries");
  }
  const EstimateResult r = Estimate(omega, b.H, inst.X, inst.A, inst.B);
  const json out{{"x_hat", FromVector(r.x_hat)},
                 {"w_hat", FromVector(r.w_hat)},
                 {"residual", r.residual},
                 {"bound", b.meta.at("bound")},
                 {"epsilon", b.meta.at("epsilon")}};
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int CmdSimulate(const std::string& instance_path, const std::string& design,
                int trials, std::uint64_t seed, const std::string& out) {
  const Instance inst = LoadInstance(instance_path);
  const Bundle b = LoadBundle(design, inst);
  const double bound = b.meta.at("bound").get<double>();
  const double theta = b.meta.at("theta").get<double>();
  const double epsilon = b.meta.at("epsilon").get<double>();
  const RiskReport rep =
      MonteCarloRisk(SignalSampler(inst.X), inst.Observation(), inst.B, b.H,
                     bound, trials, theta, epsilon, seed);
  std::string csv = "trial,error,bound,covered\n";
  for (int t = 0; t < rep.trials(); ++t) {
    csv += std::to_string(t) + "," + FormatDouble(rep.errors[t]) + "," +
           FormatDouble(bound) + "," + (rep.errors[t] <= bound ? "1" : "0") + "\n";
  }
  const json summary{{"trials", rep.trials()},
                     {"seed", seed},
                     {"bound", bound},
                     {"epsilon", epsilon},
                     {"quantile", rep.quantile},
                     {"exceed", rep.exceed},
                     {"exceed_rate", rep.exceed_rate()},
                     {"standard_error", rep.standard_error()},
                     {"coverage_ok", rep.coverage_ok()},
                     {"implication_failures", rep.implication_failures()}};
  WriteText(out + ".csv", csv);
  WriteText(out + "-summary.json", summary.dump(2) + "\n");
  std::printf("%s\n", summary.dump(2).c_str());
  return 0;
}

int CmdRunExp(const std::string& config_path, const std::string& kind,
              std::optional<int> n, std::optional<int> trials,
              std::optional<std::uint64_t> seed, const std::string& out) {
  json j = config_path.empty() ? json::object() : ReadJson(config_path);
  if (!kind.empty()) j["kind"] = kind;
  if (n) j["n"] = *n;
  if (trials) j["trials"] = *trials;
  if (seed) j["seed"] = *seed;
  if (!out.empty()) j["out_dir"] = out;
  const ExperimentConfig config = ExperimentConfig::FromJson(j);
  const RunRecord record = RunExperiment(config);
  for (const fs::path& f : EmitReport(record, config.out_dir)) {
    std::printf("wrote %s\n", f.string().c_str());
  }
  for (const DesignRecord& d : record.designs) {
    std::printf("design %s (%s): bound %s epsilon %s columns %d\n",
                d.name.c_str(), ToString(d.mode), FormatDouble(d.bound).c_str(),
                FormatDouble(d.epsilon).c_str(), d.columns());
  }
  for (const RiskReport& r : record.risks) {
    std::printf("%s: quantile %s exceed %d/%d\n", r.name.c_str(),
                FormatDouble(r.quantile).c_str(), r.exceed, r.trials());
  }
  return 0;
}

int CmdVerify(const std::vector<int>& only, std::uint64_t seed) {
  AcceptanceOptions options;
  options.only = only;
  options.seed = seed;
  options.on_result = [](const CriterionResult& r) {
    std::printf("%s\n", r.Line().c_str());
    std::fflush(stdout);
  };
  int failed = 0;
  for (const CriterionResult& r : RunAcceptance(options)) failed += !r.passed;
  std::printf("%s: %d criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}

}  // namespace
}  // namespace polyest

int main(int argc, char** argv) {
  CLI::App app{"Polyhedral estimates for linear inverse problems"};
  app.require_subcommand(1);

  std::string instance, mode = "full", out, design, omega, omega_file, config,
                        kind;
  double delta = 0.0, theta = 2.0;
  std::uint64_t seed = 1;
  int trials = 100;

  auto* cmd_design = app.add_subcommand("design", "Solve a contrast design");
  cmd_design->add_option("--instance", instance, "Instance JSON")->required();
  cmd_design->add_option("--delta", delta, "Per-column tail level")->required();
  cmd_design->add_option("--theta", theta, "Loss norm: 1, 1.333.. (4/3) or 2");
  cmd_design->add_option("--mode", mode, "full, ellitope-only or polytope-only");
  cmd_design->add_option("--seed", seed, "Seed for the contrast assembly");
  cmd_design->add_option("--out", out, "Output prefix")->required();

  auto* cmd_estimate = app.add_subcommand("estimate", "Estimate from one observation");
  cmd_estimate->add_option("--instance", instance, "Instance JSON")->required();
  cmd_estimate->add_option("--design", design, "Design bundle prefix")->required();
  auto* omega_opt =
      cmd_estimate->add_option("--omega", omega, "Comma-separated observation");
  cmd_estimate->add_option("--omega-file", omega_file, "Observation file")
      ->excludes(omega_opt);

  auto* cmd_simulate = app.add_subcommand("simulate", "Monte-Carlo risk of a design");
  cmd_simulate->add_option("--instance", instance, "Instance JSON")->required();
  cmd_simulate->add_option("--design", design, "Design bundle prefix")->required();
  cmd_simulate->add_option("--trials", trials, "Number of trials");
  cmd_simulate->add_option("--seed", seed, "Trial seed");
  cmd_simulate->add_option("--out", out, "Output prefix")->required();

  std::optional<int> n_override, trials_override;
  std::optional<std::uint64_t> seed_override;
  auto* cmd_run = app.add_subcommand("run-exp", "Run an experiment and write a report");
  cmd_run->add_option("--config", config, "Experiment config JSON");
  cmd_run->add_option("--kind", kind, "l1-ellitope or mixture");
  cmd_run->add_option("--n", n_override, "Signal dimension");
  cmd_run->add_option("--trials", trials_override, "Number of trials");
  cmd_run->add_option("--seed", seed_override, "Seed");
  cmd_run->add_option("--out", out, "Output directory");

  std::vector<int> only;
  std::uint64_t verify_seed = polyest::AcceptanceOptions{}.seed;
  auto* cmd_verify = app.add_subcommand("verify", "Run the acceptance checks");
  cmd_verify->add_option("--only", only, "Criteria to run (1-10)")->delimiter(',');
  cmd_verify->add_option("--seed", verify_seed, "Seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*cmd_design) {
      return polyest::CmdDesign(instance, delta, theta, mode, seed, out);
    }
    if (*cmd_estimate) {
      if (omega.empty() && omega_file.empty()) {
        throw std::invalid_argument("--omega or --omega-file is required");
      }
      return polyest::CmdEstimate(instance, design, omega, omega_file);
    }
    if (*cmd_simulate) {
      return polyest::CmdSimulate(instance, design, trials, seed, out);
    }
    if (*cmd_run) {
      return polyest::CmdRunExp(config, kind, n_override, trials_override,
                                seed_override, out);
    }
    return polyest::CmdVerify(only, verify_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
