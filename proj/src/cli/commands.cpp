#include "commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "remeta/errors.hpp"
#include "remeta/risk.hpp"
#include "remeta/simd/kernels.hpp"

namespace remeta::cli {

using json = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<double> parse_double_list(const std::string& s,
                                      const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ParseError(std::string("bad number '") + tok + "' in " + what);
    }
  }
  if (out.empty()) throw ParseError(std::string("empty list for ") + what);
  return out;
}

CanonicalForm design_from_options(const CurveOptions& opt) {
  if (!opt.design.empty() && !opt.input_path.empty())
    throw InvalidInput("give either --design or --input, not both");
  if (!opt.design.empty()) {
    std::vector<double> s2;
    std::vector<int> nu;
    std::stringstream ss(opt.design);
    std::string part;
    while (std::getline(ss, part, ';')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos)
        throw ParseError("design: expected s2=...;nu=...");
      const std::string key = part.substr(0, eq);
      const std::string val = part.substr(eq + 1);
      if (key == "s2") {
        s2 = parse_double_list(val, "s2");
      } else if (key == "nu") {
        for (double v : parse_double_list(val, "nu")) {
          if (v != std::floor(v) || v < 1)
            throw ParseError("design: nu entries must be integers >= 1");
          nu.push_back(static_cast<int>(v));
        }
      } else {
        throw ParseError("design: unknown key '" + key + "'");
      }
    }
    if (s2.empty() || nu.empty())
      throw ParseError("design needs both s2= and nu=");
    return design_form(s2, nu);
  }
  if (opt.input_path.empty())
    throw InvalidInput("risk-curve needs --design or --input");
  const GroupedData g = group(read_csv_file(opt.input_path));
  if (g.p < 2)
    throw UnsupportedInput("risk-curve needs p >= 2 distinct variances");
  return design_form(g.s2, g.nu);
}

std::vector<double> parse_grid(const std::string& spec,
                               const CanonicalForm& design) {
  if (spec == "default") return default_tau2_grid(design);
  const bool log0 = spec.rfind("log0:", 0) == 0;
  const bool logg = spec.rfind("log:", 0) == 0;
  if (log0 || logg) {
    const std::string body = spec.substr(log0 ? 5 : 4);
    std::vector<double> parts;
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(std::stod(tok));
    if (parts.size() != 3 || !(parts[0] > 0.0) || !(parts[1] > parts[0]) ||
        parts[2] < 2)
      throw ParseError("grid: log[0]:<lo>:<hi>:<count> with 0<lo<hi, count>=2");
    std::vector<double> grid;
    if (log0) grid.push_back(0.0);
    const int count = static_cast<int>(parts[2]);
    const double la = std::log(parts[0]), lb = std::log(parts[1]);
    for (int k = 0; k < count; ++k)
      grid.push_back(std::exp(la + (lb - la) * k / (count - 1)));
    return grid;
  }
  auto grid = parse_double_list(spec, "grid");
  for (double g : grid)
    if (g < 0.0) throw ParseError("grid: tau2 values must be >= 0");
  return grid;
}

json tau_to_json(const TauEstimate& e) {
  return json{{"value", e.value},
              {"raw_value", e.raw_value},
              {"iterations", e.iterations}};
}

json residuals_to_json(const IdentityResiduals& r) {
  return json{{"co0_col_sums", r.col_sums},
              {"co2_row_sums", r.row_sums},
              {"co3_projector", r.projector},
              {"co5_gap", r.gap},
              {"co6_b_three_way", r.b_three_way},
              {"co7_quad_form", r.quad_form},
              {"co10_rank_one", r.rank_one},
              {"diag_j", r.diag_j},
              {"diag_s", r.diag_s},
              {"rep_mean", r.representation},
              {"worst", r.worst()}};
}

TauEstimate run_tau_method(const CanonicalForm& cf, const std::string& m) {
  if (m == "dl") return dersimonian_laird(cf);
  if (m == "hedges") return hedges(cf);
  if (m == "mp") return mandel_paule(cf);
  if (m == "reml") return reml(cf);
  if (m.rfind("moment:", 0) == 0) {
    QuadraticFormSpec spec;
    std::stringstream ss(m.substr(7));
    std::string part;
    while (std::getline(ss, part, ';')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos)
        throw ParseError("moment: expected q=...;r=...");
      const std::string key = part.substr(0, eq);
      auto vals = parse_double_list(part.substr(eq + 1), key.c_str());
      if (key == "q") spec.q = vals;
      else if (key == "r") spec.r = vals;
      else throw ParseError("moment: unknown key '" + key + "'");
    }
    const int pm1 = cf.p() - 1;
    if (spec.q.size() == 1 && pm1 > 1) spec.q.assign(pm1, spec.q[0]);
    if (spec.r.size() == 1 && cf.p() > 1) spec.r.assign(cf.p(), spec.r[0]);
    return moment_estimator(cf, spec);
  }
  throw ParseError("unknown tau method '" + m +
                   "'; valid: dl, hedges, mp, reml, moment:q=..;r=..");
}

}  // namespace

std::string cmd_analyze(const AnalyzeOptions& opt) {
  const StudySet set = read_csv_file(opt.input_path);
  const GroupedData g = group(set);
  json out;
  out["input"] = opt.input_path;
  out["n"] = g.n;
  out["p"] = g.p;
  json groups = json::array();
  for (int i = 0; i < g.p; ++i)
    groups.push_back(json{{"s2", g.s2[i]},
                          {"nu", g.nu[i]},
                          {"mean", g.mean[i]},
                          {"u2", g.u2[i]}});
  out["groups"] = groups;

  if (g.p == 1) {
    out["warning"] =
        "all studies share one variance (p = 1); only the sample mean is "
        "available";
    out["mu"] = json{{"mean", json{{"value", g.mean[0]}}}};
    return out.dump(2) + "\n";
  }

  const CanonicalForm cf = transform(g);
  out["i_squared"] = i_squared(cf);

  std::vector<std::string> tau_methods = opt.tau_methods;
  if (tau_methods.empty()) tau_methods = {"dl", "hedges", "mp", "reml"};
  json tau;
  for (const auto& m : tau_methods) tau[m] = tau_to_json(run_tau_method(cf, m));
  out["tau2"] = tau;

  std::vector<std::string> mu_methods = opt.mu_methods;
  if (mu_methods.empty()) mu_methods = {"dl"};
  json mu;
  for (const auto& m : mu_methods) {
    const WeightRule rule = WeightRule::parse(m);
    const MuEstimate est = estimate_mu(cf, rule);
    json entry{{"value", est.value}};
    if (est.tau) entry["tau2"] = tau_to_json(*est.tau);
    entry["weights_w"] = est.w;
    entry["weights_omega"] = est.omega;
    mu[m] = entry;
  }
  out["mu"] = mu;

  json canon;
  canon["t2"] = cf.t2;
  canon["b"] = cf.b;
  canon["y"] = cf.y;
  canon["residuals_tau2_0"] = residuals_to_json(identity_residuals(cf, 0.0));
  out["canonical"] = canon;
  return out.dump(2) + "\n";
}

std::string cmd_canonical(const CanonicalOptions& opt) {
  const GroupedData g = group(read_csv_file(opt.input_path));
  if (g.p < 2)
    throw UnsupportedInput(
        "canonical diagnostics need p >= 2 distinct variances");
  const CanonicalForm cf = transform(g);
  json out;
  out["n"] = g.n;
  out["p"] = g.p;
  out["s2"] = g.s2;
  out["nu"] = g.nu;
  out["t2"] = cf.t2;
  out["b"] = cf.b;
  out["y"] = cf.y;
  json rows = json::array();
  for (int i = 0; i < g.p; ++i) {
    json row = json::array();
    for (int j = 0; j < g.p - 1; ++j) row.push_back(cf.a(i, j));
    rows.push_back(row);
  }
  out["A"] = rows;
  const double tau_dl = dersimonian_laird(cf).value;
  out["residuals"] = json{
      {"tau2_0", residuals_to_json(identity_residuals(cf, 0.0))},
      {"tau2_dl", json{{"tau2", tau_dl},
                       {"residuals",
                        residuals_to_json(identity_residuals(cf, tau_dl))}}}};
  return out.dump(2) + "\n";
}

std::string cmd_risk_curve(const CurveOptions& opt) {
  if (opt.out.empty()) throw InvalidInput("risk-curve needs --out");
  const CanonicalForm design = design_from_options(opt);
  const WeightRule rule = WeightRule::parse(opt.rule);
  const std::vector<double> grid = parse_grid(opt.grid, design);
  McOptions mc;
  mc.n_samples = opt.samples;
  mc.seed = opt.seed;
  mc.threads = opt.threads;
  const RiskCurve curve = risk_curve(design, rule, grid, mc);
  const double bound = design.n() > 3
                           ? minimax_bound(design.n())
                           : std::numeric_limits<double>::quiet_NaN();
  std::ofstream f(opt.out, std::ios::binary);
  if (!f) throw InvalidInput("cannot write '" + opt.out + "'");
  f << "tau2,r_risk,mc_se,method,minimax\n";
  for (const RiskPoint& pt : curve.points) {
    f << fmt_double(pt.tau2) << ',' << fmt_double(pt.r_risk) << ','
      << fmt_double(pt.mc_std_error) << ','
      << (pt.method == RiskMethod::ClosedForm ? "closed-form" : "monte-carlo")
      << ',' << fmt_double(bound) << '\n';
  }
  std::ostringstream msg;
  msg << "wrote " << curve.points.size() << " points for rule '" << curve.rule
      << "' to " << opt.out << " (backend: " << simd::backend_name() << ")\n";
  return msg.str();
}

std::string cmd_figure1(const Figure1Options& opt) {
  std::vector<double> grid;
  for (double t = 0.0; t <= opt.grid_max + 1e-12; t += opt.grid_step)
    grid.push_back(t);
  std::ostringstream msg;
  for (int n : {5, 15}) {
    const Figure1Curves fig = figure1_curves(n, grid);
    const std::string path = opt.out_prefix + "n" + std::to_string(n) + ".csv";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write '" + path + "'");
    f << "tau2,r_dl,r_mh,r_delta1,minimax\n";
    for (size_t k = 0; k < fig.tau2.size(); ++k) {
      f << fmt_double(fig.tau2[k]) << ',' << fmt_double(fig.dl[k]) << ','
        << fmt_double(fig.mh[k]) << ',' << fmt_double(fig.delta1[k]) << ','
        << fmt_double(fig.minimax) << '\n';
    }
    msg << "wrote " << path << "\n";
  }
  msg << "Equal-uncertainty R-risk curves (s^2 = 1). Expected picture: the\n"
         "DL curve starts below the modified-Hedges curve at tau2 = 0, the\n"
         "two cross at moderate tau2, and delta1 stays at or below the\n"
         "minimax line 2/(n-1) everywhere.\n";
  return msg.str();
}

}  // namespace remeta::cli
