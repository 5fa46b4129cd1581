#pragma once

#include <optional>
#include <string>
#include <vector>

#include "remeta/canonical.hpp"

namespace remeta {

// Coefficients of a general moment quadratic form
// q = sum_j q_j y_j^2 + sum_i (nu_i - 1) r_i u_i^2, all positive.
struct QuadraticFormSpec {
  std::vector<double> q;  // size p-1
  std::vector<double> r;  // size p

  static QuadraticFormSpec equal(int p);  // q_j = r_i = 1
};

struct TauEstimate {
  double value = 0.0;      // truncated at zero
  double raw_value = 0.0;  // pre-truncation
  std::string method;
  int iterations = 0;  // 0 for closed-form
};

// DerSimonian-Laird through the y/u representation.
TauEstimate dersimonian_laird(const CanonicalForm& cf);

TauEstimate hedges(const CanonicalForm& cf);

// General method-of-moments estimator for a positive quadratic form.
TauEstimate moment_estimator(const CanonicalForm& cf,
                             const QuadraticFormSpec& spec);

// Mandel-Paule: root of sum_j y_j^2/(tau2+t_j^2) + sum_i (nu_i-1)
// u_i^2/(tau2+s_i^2) = n-1, or 0 when no positive root exists.
TauEstimate mandel_paule(const CanonicalForm& cf);

// REML by the fixed-point iteration with (tau2+t_j^2)^-2 weights;
// starts from DerSimonian-Laird unless told otherwise.  Throws
// NonConvergence (carrying the last iterate) past max_iter.
TauEstimate reml(const CanonicalForm& cf,
                 std::optional<double> start = std::nullopt,
                 double tol = 1e-10, int max_iter = 500);

// Heterogeneity index I^2 in [0, 1).
double i_squared(const CanonicalForm& cf);

// Left-hand side of the Mandel-Paule equation (strictly decreasing).
double mandel_paule_lhs(const CanonicalForm& cf, double tau2);

// Negative restricted log-likelihood, y/u representation (rl).
double restricted_loglik(const CanonicalForm& cf, double tau2);
// Same quantity from the x-space definition (with x_tilde and the
// log-sum term); agrees with the representation to rounding.
double restricted_loglik_xspace(const CanonicalForm& cf, double tau2);
// d/dtau2 of the restricted negative log-likelihood.
double reml_score(const CanonicalForm& cf, double tau2);

// T = sum_j y_j^2/t_j^2 + sum_i (nu_i-1) u_i^2/s_i^2 (Cochran-type).
double pivot_statistic(const CanonicalForm& cf);

// q_infinity = sum y_j^2 + sum (nu_i-1) u_i^2 and the q_0 analogue with
// t_j^-2 / s_i^-2 coefficients; the quadratic forms behind delta1/delta0.
double q_infinity(const CanonicalForm& cf);
double q_zero(const CanonicalForm& cf);

}  // namespace remeta
