#include "remeta/mu_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "remeta/errors.hpp"
#include "remeta/numerics.hpp"

namespace remeta {

PriorSpec PriorSpec::log_grid(double lo, double hi, int count,
                              bool include_zero) {
  if (!(lo > 0.0) || !(hi > lo) || count < 1)
    throw InvalidInput("prior grid: need 0 < lo < hi and count >= 1");
  PriorSpec p;
  const int total = count + (include_zero ? 1 : 0);
  const double wt = 1.0 / total;
  if (include_zero) p.nodes.emplace_back(0.0, wt);
  const double la = std::log(lo), lb = std::log(hi);
  for (int k = 0; k < count; ++k) {
    const double f = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    p.nodes.emplace_back(std::exp(la + f * (lb - la)), wt);
  }
  return p;
}

PriorSpec PriorSpec::default_grid(double s2_bar) {
  return log_grid(1e-6 * s2_bar, 1e4 * s2_bar, 400, true);
}

namespace {

void require_n_gt3(const CanonicalForm& cf, const char* what) {
  if (cf.n() <= 3)
    throw InvalidForSampleSize(std::string(what) +
                               " requires more than 3 studies");
}

std::vector<double> clamp_weights(const CanonicalForm& cf,
                                  std::vector<double> w) {
  for (size_t j = 0; j < w.size(); ++j)
    w[j] = std::max(0.0, std::min(w[j], 1.0 / cf.t2[j]));
  return w;
}

std::vector<double> plugin_weights(const CanonicalForm& cf, double tau2) {
  std::vector<double> w(cf.t2.size());
  for (size_t j = 0; j < w.size(); ++j) w[j] = 1.0 / (tau2 + cf.t2[j]);
  return w;
}

std::vector<double> split_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

}  // namespace

std::vector<double> stein_weights(const CanonicalForm& cf,
                                  const QuadraticFormSpec& spec,
                                  double alpha) {
  if (!(alpha > 0.0)) throw InvalidInput("stein: alpha > 0 required");
  const GroupedData& g = cf.g;
  if (static_cast<int>(spec.q.size()) != g.p - 1 ||
      static_cast<int>(spec.r.size()) != g.p)
    throw InvalidInput("stein: spec sizes must match the design");
  double q = 0.0;
  for (int j = 0; j < g.p - 1; ++j) q += spec.q[j] * cf.y[j] * cf.y[j];
  for (int i = 0; i < g.p; ++i) q += (g.nu[i] - 1) * spec.r[i] * g.u2[i];
  std::vector<double> w(g.p - 1);
  for (int j = 0; j < g.p - 1; ++j) {
    const double cap = 1.0 / cf.t2[j];
    // q = 0 (all data at the center) takes the cap branch, the
    // continuous limit of the min as q -> 0+.
    w[j] = q > 0.0 ? std::min(alpha * spec.q[j] / q, cap) : cap;
  }
  return w;
}

std::vector<double> bayes_weights(const CanonicalForm& cf,
                                  const PriorSpec& prior) {
  if (prior.nodes.empty()) throw InvalidInput("bayes: empty prior");
  std::vector<double> loglik(prior.nodes.size());
  for (size_t k = 0; k < prior.nodes.size(); ++k) {
    const auto& [tau2, wt] = prior.nodes[k];
    if (tau2 < 0.0 || wt < 0.0)
      throw InvalidInput("bayes: prior nodes need tau2 >= 0, weight >= 0");
    loglik[k] = wt > 0.0
                    ? std::log(wt) - restricted_loglik(cf, tau2)
                    : -std::numeric_limits<double>::infinity();
  }
  const double lse = log_sum_exp(loglik);
  if (!std::isfinite(lse))
    throw NumericalFailure(
        "bayes: posterior mass underflowed at every prior node");
  std::vector<double> w(cf.t2.size(), 0.0);
  double z = 0.0;
  for (size_t k = 0; k < prior.nodes.size(); ++k) {
    const double pk = std::exp(loglik[k] - lse);
    z += pk;
    for (size_t j = 0; j < w.size(); ++j)
      w[j] += pk / (prior.nodes[k].first + cf.t2[j]);
  }
  for (double& wj : w) wj /= z;
  return w;
}

std::vector<double> rule_weights(const CanonicalForm& cf,
                                 const WeightRule& rule) {
  const GroupedData& g = cf.g;
  const int pm1 = g.p - 1;
  std::vector<double> w;
  switch (rule.kind) {
    case RuleKind::SampleMean:
      w.assign(pm1, 0.0);
      break;
    case RuleKind::GraybillDeal:
      w = plugin_weights(cf, 0.0);
      break;
    case RuleKind::PluginFixed:
      if (rule.fixed_tau2 < 0.0)
        throw InvalidInput("plug-in tau2 must be >= 0");
      w = plugin_weights(cf, rule.fixed_tau2);
      break;
    case RuleKind::PluginDL:
      w = plugin_weights(cf, dersimonian_laird(cf).value);
      break;
    case RuleKind::PluginHedges:
      w = plugin_weights(cf, hedges(cf).value);
      break;
    case RuleKind::PluginMP:
      w = plugin_weights(cf, mandel_paule(cf).value);
      break;
    case RuleKind::PluginREML:
      w = plugin_weights(cf, reml(cf).value);
      break;
    case RuleKind::Delta1: {
      require_n_gt3(cf, "delta1");
      w = stein_weights(cf, QuadraticFormSpec::equal(g.p), g.n - 3);
      break;
    }
    case RuleKind::Delta0: {
      require_n_gt3(cf, "delta0");
      QuadraticFormSpec s;
      s.q.resize(pm1);
      s.r.resize(g.p);
      for (int j = 0; j < pm1; ++j) s.q[j] = 1.0 / cf.t2[j];
      for (int i = 0; i < g.p; ++i) s.r[i] = 1.0 / g.s2[i];
      w = stein_weights(cf, s, g.n - 1);
      break;
    }
    case RuleKind::ModifiedHedges: {
      require_n_gt3(cf, "modified Hedges");
      double q = q_infinity(cf);
      for (int j = 0; j < pm1; ++j) q -= cf.t2[j];
      for (int i = 0; i < g.p; ++i) q -= (g.nu[i] - 1) * g.s2[i];
      const double tau2 = std::max(0.0, q / (g.n - 3));
      w = plugin_weights(cf, tau2);
      break;
    }
    case RuleKind::Stein: {
      require_n_gt3(cf, "stein");
      QuadraticFormSpec spec =
          rule.spec ? *rule.spec : QuadraticFormSpec::equal(g.p);
      // scalar entries broadcast; empty lists mean equal coefficients
      if (spec.q.empty()) spec.q.assign(pm1, 1.0);
      if (spec.q.size() == 1 && pm1 > 1) spec.q.assign(pm1, spec.q[0]);
      if (spec.r.empty()) spec.r.assign(g.p, 1.0);
      if (spec.r.size() == 1 && g.p > 1) spec.r.assign(g.p, spec.r[0]);
      w = stein_weights(cf, spec, rule.alpha);
      break;
    }
    case RuleKind::Bayes: {
      const PriorSpec prior =
          rule.prior ? *rule.prior : PriorSpec::default_grid(g.s2_bar());
      w = bayes_weights(cf, prior);
      break;
    }
  }
  return clamp_weights(cf, std::move(w));
}

std::vector<double> omega_weights(const CanonicalForm& cf,
                                  const std::vector<double>& w) {
  const GroupedData& g = cf.g;
  if (static_cast<int>(w.size()) != g.p - 1)
    throw InvalidInput("omega_weights: w must have p-1 entries");
  std::vector<double> omega(g.p);
  for (int i = 0; i < g.p; ++i) {
    double acc = static_cast<double>(g.nu[i]) / g.n;
    for (int j = 0; j < g.p - 1; ++j) acc -= w[j] * cf.a(i, j);
    omega[i] = acc;
  }
  return omega;
}

MuEstimate estimate_mu(const CanonicalForm& cf, const WeightRule& rule) {
  MuEstimate out;
  out.w = rule_weights(cf, rule);
  switch (rule.kind) {
    case RuleKind::PluginDL:
      out.tau = dersimonian_laird(cf);
      break;
    case RuleKind::PluginHedges:
      out.tau = hedges(cf);
      break;
    case RuleKind::PluginMP:
      out.tau = mandel_paule(cf);
      break;
    case RuleKind::PluginREML:
      out.tau = reml(cf);
      break;
    default:
      break;
  }
  double corr = 0.0;
  for (size_t j = 0; j < out.w.size(); ++j)
    corr += std::sqrt(cf.b[j]) * out.w[j] * cf.y[j];
  out.value = cf.g.grand_mean() - corr;
  out.omega = omega_weights(cf, out.w);
  return out;
}

MuEstimate estimate_mu(const GroupedData& g, const WeightRule& rule) {
  if (g.p == 1) {
    MuEstimate out;
    out.value = g.mean[0];
    out.omega = {1.0};
    out.p1_fallback = true;
    return out;
  }
  return estimate_mu(transform(g), rule);
}

std::string WeightRule::name() const {
  switch (kind) {
    case RuleKind::SampleMean: return "mean";
    case RuleKind::GraybillDeal: return "gd";
    case RuleKind::PluginFixed: return "oracle";
    case RuleKind::PluginDL: return "dl";
    case RuleKind::PluginHedges: return "hedges";
    case RuleKind::PluginMP: return "mp";
    case RuleKind::PluginREML: return "reml";
    case RuleKind::Delta1: return "delta1";
    case RuleKind::Delta0: return "delta0";
    case RuleKind::ModifiedHedges: return "mh";
    case RuleKind::Stein: return "stein";
    case RuleKind::Bayes: return "bayes";
  }
  return "?";
}

std::string WeightRule::valid_names() {
  return "mean, gd, dl, hedges, mp, reml, delta1, delta0, mh, "
         "oracle:<tau2>, stein:alpha=<a>;q=<q1,..>;r=<r1,..>, "
         "bayes[:grid=<lo,hi,count>]";
}

WeightRule WeightRule::parse(const std::string& text) {
  WeightRule r;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string rest =
      colon == std::string::npos ? std::string() : text.substr(colon + 1);
  if (head == "mean") r.kind = RuleKind::SampleMean;
  else if (head == "gd") r.kind = RuleKind::GraybillDeal;
  else if (head == "dl") r.kind = RuleKind::PluginDL;
  else if (head == "hedges") r.kind = RuleKind::PluginHedges;
  else if (head == "mp") r.kind = RuleKind::PluginMP;
  else if (head == "reml") r.kind = RuleKind::PluginREML;
  else if (head == "delta1") r.kind = RuleKind::Delta1;
  else if (head == "delta0") r.kind = RuleKind::Delta0;
  else if (head == "mh") r.kind = RuleKind::ModifiedHedges;
  else if (head == "oracle") {
    r.kind = RuleKind::PluginFixed;
    if (rest.empty()) throw ParseError("oracle:<tau2> needs a value");
    r.fixed_tau2 = std::stod(rest);
  } else if (head == "stein") {
    r.kind = RuleKind::Stein;
    QuadraticFormSpec spec;
    std::stringstream ss(rest);
    std::string part;
    while (std::getline(ss, part, ';')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos)
        throw ParseError("stein: expected key=value, got '" + part + "'");
      const std::string key = part.substr(0, eq);
      const std::string val = part.substr(eq + 1);
      if (key == "alpha") r.alpha = std::stod(val);
      else if (key == "q") spec.q = split_list(val);
      else if (key == "r") spec.r = split_list(val);
      else throw ParseError("stein: unknown key '" + key + "'");
    }
    if (!(r.alpha > 0.0)) throw ParseError("stein: alpha > 0 required");
    r.spec = std::move(spec);
  } else if (head == "bayes") {
    r.kind = RuleKind::Bayes;
    if (!rest.empty()) {
      if (rest.rfind("grid=", 0) != 0)
        throw ParseError("bayes options: grid=<lo,hi,count>");
      auto vals = split_list(rest.substr(5));
      if (vals.size() != 3) throw ParseError("bayes grid needs lo,hi,count");
      r.prior =
          PriorSpec::log_grid(vals[0], vals[1], static_cast<int>(vals[2]));
    }
  } else {
    throw ParseError("unknown rule '" + head + "'; valid: " + valid_names());
  }
  return r;
}

}  // namespace remeta
