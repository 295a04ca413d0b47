#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "polyest/experiments.hpp"

namespace polyest {

using nlohmann::json;
namespace fs = std::filesystem;

std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

json ToJsonArray(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// JSON has no NaN; absent bounds are written as null.
json NumberOrNull(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string ErrorsCsv(const RunRecord& r) {
  std::string s = "trial,estimator,error,bound,covered,noise_event\n";
  for (const RiskReport& rep : r.risks) {
    const bool has_bound = std::isfinite(rep.bound);
    for (int t = 0; t < rep.trials(); ++t) {
      s += std::to_string(t) + "," + rep.name + "," + FormatDouble(rep.errors[t]) +
           ",";
      if (has_bound) {
        s += FormatDouble(rep.bound) + "," +
             (rep.errors[t] <= rep.bound ? "1" : "0");
      } else {
        s += ",";
      }
      s += std::string(",") + (rep.noise_event[t] ? "1" : "0") + "\n";
    }
  }
  return s;
}

std::string DesignsCsv(const RunRecord& r) {
  std::string s =
      "design,mode,phi_gamma,rho,varsigma,bound,delta,epsilon,ellitope_columns,"
      "polytope_columns\n";
  for (const DesignRecord& d : r.designs) {
    s += d.name + "," + ToString(d.mode) + "," + FormatDouble(d.phi_gamma) + "," +
         FormatDouble(d.rho) + "," + FormatDouble(d.varsigma) + "," +
         FormatDouble(d.bound) + "," + FormatDouble(d.delta) + "," +
         FormatDouble(d.epsilon) + "," + std::to_string(d.ellitope_columns) +
         "," + std::to_string(d.polytope_columns) + "\n";
  }
  return s;
}

// Singular values of A and B plus the eigenvalues of U, S and U + S of the
// full design; shorter columns are left blank.
std::string SpectraCsv(const RunRecord& r) {
  std::vector<const VectorXd*> cols = {&r.sv_A, &r.sv_B};
  const VectorXd empty;
  const DesignRecord* full = nullptr;
  for (const DesignRecord& d : r.designs) {
    if (d.mode == DesignMode::kFull) full = &d;
  }
  cols.push_back(full ? &full->eig_U : &empty);
  cols.push_back(full ? &full->eig_S : &empty);
  cols.push_back(full ? &full->eig_US : &empty);
  Eigen::Index rows = 0;
  for (const VectorXd* c : cols) rows = std::max(rows, c->size());
  std::string s = "index,sv_A,sv_B,eig_U,eig_S,eig_U_plus_S\n";
  for (Eigen::Index i = 0; i < rows; ++i) {
    s += std::to_string(i);
    for (const VectorXd* c : cols) {
      s += ",";
      if (i < c->size()) s += FormatDouble((*c)(i));
    }
    s += "\n";
  }
  return s;
}

// ------------------------------------------------------------------- SVG

struct Quartiles {
  double lo, q1, median, q3, hi;
};

double Interpolated(const std::vector<double>& sorted, double p) {
  const double pos = p * (sorted.size() - 1);
  const size_t i = static_cast<size_t>(std::floor(pos));
  const size_t j = std::min(i + 1, sorted.size() - 1);
  return sorted[i] + (pos - i) * (sorted[j] - sorted[i]);
}

Quartiles Summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {v.front(), Interpolated(v, 0.25), Interpolated(v, 0.5),
          Interpolated(v, 0.75), v.back()};
}

class Svg {
 public:
  Svg(int width, int height) : width_(width), height_(height) {}

  void Line(double x1, double y1, double x2, double y2, const std::string& style) {
    body_ << "<line x1=\"" << F(x1) << "\" y1=\"" << F(y1) << "\" x2=\"" << F(x2)
          << "\" y2=\"" << F(y2) << "\" style=\"" << style << "\"/>\n";
  }
  void Rect(double x, double y, double w, double h, const std::string& style) {
    body_ << "<rect x=\"" << F(x) << "\" y=\"" << F(y) << "\" width=\"" << F(w)
          << "\" height=\"" << F(h) << "\" style=\"" << style << "\"/>\n";
  }
  void Text(double x, double y, const std::string& text, int size = 12,
            const std::string& anchor = "middle") {
    body_ << "<text x=\"" << F(x) << "\" y=\"" << F(y) << "\" font-size=\""
          << size << "\" text-anchor=\"" << anchor << "\">" << text
          << "</text>\n";
  }
  void Polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& style) {
    body_ << "<polyline points=\"";
    for (const auto& [x, y] : pts) body_ << F(x) << "," << F(y) << " ";
    body_ << "\" style=\"fill:none;" << style << "\"/>\n";
  }
  void Open(const std::string& cls) { body_ << "<g class=\"" << cls << "\">\n"; }
  void Close() { body_ << "</g>\n"; }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
        << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << " "
        << height_ << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" style=\"fill:white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  static std::string F(double v) {
    char buf[32];
    const auto res =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
  }
  int width_, height_;
  std::ostringstream body_;
};

// Vertical axis mapping, logarithmic when the data spans over two decades.
class Axis {
 public:
  Axis(double lo, double hi, double top, double bottom, bool allow_log)
      : top_(top), bottom_(bottom) {
    log_ = allow_log && lo > 0 && hi / lo > 100;
    lo_ = log_ ? std::log10(lo) : lo;
    hi_ = log_ ? std::log10(hi) : hi;
    if (hi_ - lo_ < 1e-300) {
      lo_ -= 0.5;
      hi_ += 0.5;
    }
    const double pad = 0.05 * (hi_ - lo_);
    lo_ -= pad;
    hi_ += pad;
  }
  double operator()(double v) const {
    const double t = ((log_ ? std::log10(v) : v) - lo_) / (hi_ - lo_);
    return bottom_ - t * (bottom_ - top_);
  }
  bool log() const { return log_; }
  std::string Label(double frac) const {
    const double v = lo_ + frac * (hi_ - lo_);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", log_ ? std::pow(10.0, v) : v);
    return buf;
  }

 private:
  double top_, bottom_, lo_, hi_;
  bool log_ = false;
};

void DrawTicks(Svg& svg, const Axis& axis, double left, double top,
               double bottom) {
  for (int k = 0; k <= 4; ++k) {
    const double y = bottom - k * (bottom - top) / 4;
    svg.Line(left - 4, y, left, y, "stroke:black");
    svg.Text(left - 6, y + 4, axis.Label(k / 4.0), 10, "end");
  }
  svg.Line(left, top, left, bottom, "stroke:black");
}

std::string ErrorsSvg(const RunRecord& r) {
  const int width = 120 + 110 * std::max<int>(1, r.risks.size()), height = 360;
  const double left = 70, top = 30, bottom = height - 40.0;
  Svg svg(width, height);
  svg.Text(width / 2.0, 18, std::string("errors (") +
                                (r.config.kind == ExperimentKind::kMixture
                                     ? "l1"
                                     : "l2") +
                                " norm) and certified bounds");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const RiskReport& rep : r.risks) {
    for (double e : rep.errors) {
      if (e > 0) lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    if (std::isfinite(rep.bound)) {
      lo = std::min(lo, rep.bound);
      hi = std::max(hi, rep.bound);
    }
  }
  if (!std::isfinite(lo)) lo = hi > 0 ? hi : 1.0;
  if (hi <= 0) hi = 1.0;
  const Axis axis(lo, hi, top, bottom, true);
  auto Y = [&](double v) { return axis(axis.log() ? std::max(v, lo) : v); };
  DrawTicks(svg, axis, left, top, bottom);
  for (size_t k = 0; k < r.risks.size(); ++k) {
    const RiskReport& rep = r.risks[k];
    const double cx = left + 60 + 110.0 * k;
    svg.Open("box");
    if (!rep.errors.empty()) {
      const Quartiles q = Summarize(rep.errors);
      svg.Line(cx, Y(q.lo), cx, Y(q.hi), "stroke:black");
      svg.Rect(cx - 25, Y(q.q3), 50, std::max(0.5, Y(q.q1) - Y(q.q3)),
               "fill:#9ecae1;stroke:black");
      svg.Line(cx - 25, Y(q.median), cx + 25, Y(q.median),
               "stroke:black;stroke-width:2");
    }
    if (std::isfinite(rep.bound)) {
      svg.Line(cx - 35, Y(rep.bound), cx + 35, Y(rep.bound),
               "stroke:#d62728;stroke-width:2;stroke-dasharray:6,3");
    }
    svg.Text(cx, bottom + 20, rep.name);
    svg.Close();
  }
  return svg.str();
}

std::string SpectraSvg(const RunRecord& r) {
  const int width = 760, height = 360;
  Svg svg(width, height);
  const DesignRecord* full = nullptr;
  for (const DesignRecord& d : r.designs) {
    if (d.mode == DesignMode::kFull) full = &d;
  }
  struct Panel {
    std::string title;
    std::vector<std::pair<const VectorXd*, std::string>> curves;
    bool allow_log;
  };
  std::vector<Panel> panels;
  panels.push_back({"singular values of A (solid) and B (dashed)",
                    {{&r.sv_A, "stroke:#1f77b4"},
                     {&r.sv_B, "stroke:#1f77b4;stroke-dasharray:6,3"}},
                    true});
  if (full) {
    panels.push_back(
        {"eigenvalues of U (dashed), S (dash-dot), U+S (solid)",
         {{&full->eig_U, "stroke:#2ca02c;stroke-dasharray:6,3"},
          {&full->eig_S, "stroke:#d62728;stroke-dasharray:8,3,2,3"},
          {&full->eig_US, "stroke:black"}},
         false});
  }
  for (size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double left = 70 + 380.0 * p, right = left + 290, top = 40,
                 bottom = height - 40.0;
    double lo = std::numeric_limits<double>::infinity(),
           hi = -std::numeric_limits<double>::infinity();
    Eigen::Index count = 1;
    for (const auto& [v, style] : panel.curves) {
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        lo = std::min(lo, (*v)(i));
        hi = std::max(hi, (*v)(i));
      }
      count = std::max(count, v->size());
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    const Axis axis(lo, hi, top, bottom, panel.allow_log);
    svg.Text((left + right) / 2, 24, panel.title, 11);
    DrawTicks(svg, axis, left, top, bottom);
    svg.Line(left, bottom, right, bottom, "stroke:black");
    for (const auto& [v, style] : panel.curves) {
      if (v->size() == 0) continue;
      std::vector<std::pair<double, double>> pts;
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        const double x =
            left + (count > 1 ? (right - left) * i / (count - 1.0) : 0.0);
        const double val = axis.log() ? std::max((*v)(i), lo) : (*v)(i);
        pts.emplace_back(x, axis(val));
      }
      svg.Open("curve");
      svg.Polyline(pts, style + ";stroke-width:1.5");
      svg.Close();
    }
  }
  return svg.str();
}

}  // namespace

json RecordSummary(const RunRecord& r) {
  json designs = json::array();
  for (const DesignRecord& d : r.designs) {
    designs.push_back({{"name", d.name},
                       {"mode", ToString(d.mode)},
                       {"phi_gamma", d.phi_gamma},
                       {"rho", d.rho},
                       {"varsigma", d.varsigma},
                       {"bound", d.bound},
                       {"delta", d.delta},
                       {"epsilon", d.epsilon},
                       {"ellitope_columns", d.ellitope_columns},
                       {"polytope_columns", d.polytope_columns},
                       {"eig_U", ToJsonArray(d.eig_U)},
                       {"eig_S", ToJsonArray(d.eig_S)},
                       {"eig_U_plus_S", ToJsonArray(d.eig_US)}});
  }
  json out{{"config", r.config.ToJson()},
           {"config_hash", r.hash},
           {"sv_A", ToJsonArray(r.sv_A)},
           {"sv_B", ToJsonArray(r.sv_B)},
           {"designs", designs}};
  if (!r.risks.empty()) {
    json risks = json::array();
    for (const RiskReport& rep : r.risks) {
      risks.push_back({{"estimator", rep.name},
                       {"trials", rep.trials()},
                       {"quantile", rep.quantile},
                       {"bound", NumberOrNull(rep.bound)},
                       {"epsilon", rep.epsilon},
                       {"exceed", rep.exceed},
                       {"exceed_rate", rep.exceed_rate()},
                       {"standard_error", rep.standard_error()},
                       {"coverage_ok", NumberOrNull(rep.bound).is_null()
                                           ? json(nullptr)
                                           : json(rep.coverage_ok())},
                       {"implication_failures", rep.implication_failures()}});
    }
    out["risk"] = risks;
  }
  return out;
}

std::vector<fs::path> EmitReport(const RunRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string stem =
      std::string(ToString(record.config.kind)) + "-" + record.hash;
  const std::vector<std::pair<std::string, std::string>> files = {
      {"errors.csv", ErrorsCsv(record)},
      {"designs.csv", DesignsCsv(record)},
      {"spectra.csv", SpectraCsv(record)},
      {"summary.json", RecordSummary(record).dump(2) + "\n"},
      {"errors.svg", ErrorsSvg(record)},
      {"spectra.svg", SpectraSvg(record)}};
  std::vector<fs::path> paths;
  for (const auto& [suffix, text] : files) {
    paths.push_back(dir / (stem + "-" + suffix));
    WriteFile(paths.back(), text);
  }
  return paths;
}

}  // namespace polyest
