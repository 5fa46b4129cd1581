#pragma once

#include <optional>
#include <string>
#include <vector>

#include "remeta/tau_estimators.hpp"

namespace remeta {

// Discrete prior on tau^2 for the generalized Bayes estimator: nodes
// with non-negative weights summing to 1.
struct PriorSpec {
  std::vector<std::pair<double, double>> nodes;  // (tau2, weight)

  // count log-spaced nodes on [lo, hi] (plus an optional node at 0),
  // equally weighted.
  static PriorSpec log_grid(double lo, double hi, int count,
                            bool include_zero = true);
  // library default, relative to the design's mean variance s2_bar
  static PriorSpec default_grid(double s2_bar);
};

enum class RuleKind {
  SampleMean,
  GraybillDeal,
  PluginFixed,  // w_j = 1/(tau2_fixed + t_j^2); the oracle when fed the truth
  PluginDL,
  PluginHedges,
  PluginMP,
  PluginREML,
  Delta1,          // w_j = min((n-3)/q_inf, t_j^-2)
  Delta0,          // w_j = min((n-1)/q_0, 1) t_j^-2
  ModifiedHedges,  // plug-in with tau2 = [(q_inf - sum t^2 - sum(nu-1)s^2)/(n-3)]_+
  Stein,           // w_j = min(alpha q_j / q, t_j^-2)
  Bayes,
};

struct WeightRule {
  RuleKind kind = RuleKind::PluginDL;
  double fixed_tau2 = 0.0;                // PluginFixed
  std::optional<QuadraticFormSpec> spec;  // Stein
  double alpha = 0.0;                     // Stein
  std::optional<PriorSpec> prior;         // Bayes

  std::string name() const;
  // Accepts: mean | gd | dl | hedges | mp | reml | delta1 | delta0 | mh
  //        | oracle:<tau2> | stein:alpha=<a>;q=<..>;r=<..> | bayes[:grid=lo,hi,count]
  static WeightRule parse(const std::string& text);
  static std::string valid_names();
};

struct MuEstimate {
  double value = 0.0;
  std::vector<double> w;      // shrinkage weights on y
  std::vector<double> omega;  // normalized weights on group means
  std::optional<TauEstimate> tau;
  bool p1_fallback = false;
};

// Clamped weights w_j in [0, t_j^-2] for the rule.
std::vector<double> rule_weights(const CanonicalForm& cf,
                                 const WeightRule& rule);

// Stein-type weights (wco) for an explicit spec and alpha.
std::vector<double> stein_weights(const CanonicalForm& cf,
                                  const QuadraticFormSpec& spec, double alpha);

// Posterior means of (tau2 + t_j^2)^-1 under the prior, stabilized with
// log-sum-exp.  Throws NumericalFailure if all mass underflows.
std::vector<double> bayes_weights(const CanonicalForm& cf,
                                  const PriorSpec& prior);

// omega_i = nu_i/n - sum_j w_j A_ij; sums to 1 exactly by (co0) and
// reproduces delta on the group means.
std::vector<double> omega_weights(const CanonicalForm& cf,
                                  const std::vector<double>& w);

// delta = x_bar - sum_j sqrt(b_j) w_j y_j.
MuEstimate estimate_mu(const CanonicalForm& cf, const WeightRule& rule);

// Grouped-data entry point; p = 1 degenerates to the sample mean with a
// flag instead of touching the canonical machinery.
MuEstimate estimate_mu(const GroupedData& g, const WeightRule& rule);

}  // namespace remeta
