#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "remeta/mu_estimators.hpp"

namespace remeta {

enum class RiskMethod { MonteCarlo, ClosedForm, Asymptotic };

struct RiskPoint {
  double tau2 = 0.0;
  double r_risk = 0.0;
  double mc_std_error = 0.0;  // 0 for closed-form points
  std::uint64_t n_samples = 0;
  RiskMethod method = RiskMethod::MonteCarlo;
};

struct RiskCurve {
  std::string rule;
  std::vector<double> s2;
  std::vector<int> nu;
  std::uint64_t seed = 0;
  std::vector<RiskPoint> points;  // sorted by tau2
};

struct McOptions {
  std::uint64_t n_samples = 1'000'000;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  int threads = 1;
};

struct McValue {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
};

// Random loss L = sum_j (w_j - h_j)^2 b_j y_j^2 / sum_j b_j h_j for one
// realization (y, u2) under the rule, h_j = (tau2+t_j^2)^-1.
double loss(const CanonicalForm& design, double tau2,
            const std::vector<double>& y, const std::vector<double>& u2,
            const WeightRule& rule);
// The squared-error form (delta - x_tilde)^2 / (Var x_bar - Var x_tilde)
// on the same realization; identical to loss() when p = 2, equal in
// expectation otherwise.
double loss_squared_error_form(const CanonicalForm& design, double tau2,
                               const std::vector<double>& y,
                               const std::vector<double>& u2,
                               const WeightRule& rule);

// Monte Carlo R-risk at one tau2: y_j ~ N(0, tau2+t_j^2),
// u_i^2 ~ (tau2+s_i^2) chi2_{nu_i-1}/(nu_i-1).  Deterministic in
// (seed, stream, n_samples) regardless of thread count.
RiskPoint r_risk_mc(const CanonicalForm& design, double tau2,
                    const WeightRule& rule, const McOptions& opts);

// Closed-form R-risk for rules whose weights ignore the data (sample
// mean, Graybill-Deal, fixed plug-in).
double fixed_rule_risk_closed(const CanonicalForm& design, double tau2,
                              const std::vector<double>& w);
double gd_risk_closed(const CanonicalForm& design, double tau2);

// (qr): Var(delta) vs Var(x_tilde) + E(delta - x_tilde)^2, both ends
// estimated end-to-end through simulate/group/transform.
struct DecompCheck {
  double var_delta = 0.0;
  double var_delta_se = 0.0;
  double rhs = 0.0;  // Var(x_tilde) analytic + MC E(delta - x_tilde)^2
  double rhs_se = 0.0;
  double var_xt = 0.0;
};
DecompCheck variance_decomposition_check(const std::vector<double>& s2,
                                         const std::vector<int>& nu, double mu,
                                         double tau2, const WeightRule& rule,
                                         std::uint64_t reps,
                                         std::uint64_t seed);

// Prop. 2.1 statistic sum_j b_j (f_j^2 - 2 d f_j / d y_j), f_j = y_j w_j.
enum class DerivMode { Analytic, FiniteDifference };
struct UreResult {
  double value = 0.0;
  bool at_kink = false;  // one-sided derivative was used
};
UreResult unbiased_risk_estimate(const CanonicalForm& cf,
                                 const WeightRule& rule,
                                 DerivMode mode = DerivMode::Analytic);

// Theorem 1 limit (isr) for w_j ~ alpha_j / q, by Monte Carlo over
// standard normals and chi-squares.
McValue theorem1_limit(const CanonicalForm& design,
                       const QuadraticFormSpec& spec,
                       const std::vector<double>& alphas,
                       std::uint64_t n_samples, std::uint64_t seed);
// Closed form of the same limit for equal coefficients q_j = r_i.
double theorem1_limit_equal_closed(int n, double alpha);

// Right-hand side of the improvement condition (xbar).
double xbar_improvement_alpha(const CanonicalForm& design,
                              const QuadraticFormSpec& spec);

// Equal-uncertainty limit (rar) for w(v) = min(alpha/v, 1/s^2).
double equal_uncertainty_risk(int n, double s2, double tau2, double alpha);
// Quadrature version for an arbitrary limiting weight function w(v);
// kinks lists v-values where w has a kink.
double equal_uncertainty_risk_general(int n, double s2, double tau2,
                                      const std::function<double(double)>& w,
                                      const std::vector<double>& kinks);
// Limiting weight functions of the named rules in the equal-uncertainty
// setting; returns the kink location through *kink.
std::function<double(double)> equal_uncertainty_w(RuleKind kind, int n,
                                                  double s2, double* kink);

double minimax_bound(int n);  // 2/(n-1), n > 3

// --- p = 2 analytics (Section 3 of the analysis) ---

// kappa = 1 + t^2 [(nu_1-1)/s_1^2 + (nu_2-1)/s_2^2].
double p2_kappa(const CanonicalForm& design);

double p2_risk_at_zero_dl(const CanonicalForm& design);      // quadrature
double p2_risk_at_zero_delta0(const CanonicalForm& design);  // quadrature
double p2_risk_at_zero_delta1_quad(const CanonicalForm& design);
McValue p2_risk_at_zero_delta1_mc(const CanonicalForm& design,
                                  std::uint64_t draws, std::uint64_t seed);
// Dispatcher for the named rules at tau2 = 0 (delta1 via the default
// 1e7-draw Monte Carlo, the others via quadrature).
double p2_risk_at_zero(const CanonicalForm& design, RuleKind kind);

// Okamoto constant a and the bound G_{n+1}(a v) on F(t^2 v).
double okamoto_a(const CanonicalForm& design);
std::pair<double, double> okamoto_bound(const CanonicalForm& design, double v);
// Lower bound on R(delta1, 0) implied by the Okamoto inequality.
double delta1_zero_lower_bound(double a, int n);
// a0(n): where the lower bound crosses the minimax value 2/(n-1).
double a0_threshold(int n);

// --- curves ---

std::vector<double> default_tau2_grid(const CanonicalForm& design);
RiskCurve risk_curve(const CanonicalForm& design, const WeightRule& rule,
                     const std::vector<double>& grid, const McOptions& opts);

struct Figure1Curves {
  int n = 0;
  double minimax = 0.0;
  std::vector<double> tau2;
  std::vector<double> dl;      // also REML / Hedges in this limit
  std::vector<double> mh;
  std::vector<double> delta1;
};
Figure1Curves figure1_curves(int n, const std::vector<double>& grid);

}  // namespace remeta
