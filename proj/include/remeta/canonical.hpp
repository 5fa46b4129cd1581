#pragma once

#include <vector>

#include "remeta/core_model.hpp"

namespace remeta {

// Canonical representation of the restricted likelihood: the p-1 roots
// t_j^2 of Q(v) = M(v) P'(v)/P(v) (each interlacing two adjacent group
// variances), the p x (p-1) contrast matrix A, the positive scale
// coefficients b_j, and the transformed data y_j = sum_i A_ij x_i /
// sqrt(b_j), which are independent N(0, tau^2 + t_j^2) whatever mu is.
struct CanonicalForm {
  GroupedData g;
  std::vector<double> t2;  // ascending, size p-1
  std::vector<double> b;   // size p-1
  std::vector<double> y;   // size p-1
  std::vector<double> A;   // row-major p x (p-1)

  int p() const { return g.p; }
  int n() const { return g.n; }
  double a(int i, int j) const { return A[static_cast<size_t>(i) * (g.p - 1) + j]; }
};

// Coefficients of Q(v), ascending degree; leading coefficient n.
std::vector<double> q_polynomial(const GroupedData& g);

// Q evaluated in product form at v = -w (w plays the role of t^2).
double q_at_neg(const GroupedData& g, double w);
double q_prime_at_neg(const GroupedData& g, double w);
double m_at_neg(const GroupedData& g, double w);

// The p-1 roots t_j^2, ascending; one per interval (s_i^2, s_{i+1}^2).
std::vector<double> find_roots(const GroupedData& g);

// A per (coe) and b_j = -M(-t_j^2)/Q'(-t_j^2), cross-checked against
// sum_i A_ij^2/nu_i.
void a_matrix(const GroupedData& g, const std::vector<double>& t2,
              std::vector<double>& A, std::vector<double>& b);

// Full canonical form from grouped data (group means drive y).
CanonicalForm transform(const GroupedData& g);

// Canonical form of a bare design (all means zero); used by the risk
// engine which never looks at y.
CanonicalForm design_form(const std::vector<double>& s2,
                          const std::vector<int>& nu);

// x-tilde computed two ways: directly from the (we) weights on group
// means, and through representation (rep).
struct MeanDecomposition {
  double direct = 0.0;
  double representation = 0.0;
  double x_bar = 0.0;
  std::vector<double> root_terms;  // sqrt(b_j) y_j / (tau2 + t_j^2)
};
MeanDecomposition weighted_mean_decomposition(const CanonicalForm& cf,
                                              double tau2);

// Var(x_bar) - Var(x_tilde) = sum_j b_j/(tau2+t_j^2), evaluated three
// ways (the b-sum, the weights form, the (co5) polynomial ratio).
double variance_gap(const CanonicalForm& cf, double tau2);
double variance_gap_weights(const CanonicalForm& cf, double tau2);
double variance_gap_poly(const CanonicalForm& cf, double tau2);

// |LHS - RHS| of the quadratic-form identity (co7) at this tau2.
double quad_form_identity_residual(const CanonicalForm& cf, double tau2);

// Relative residuals of every appendix identity; the canonical module's
// test surface.  All should sit at rounding level (<= 1e-9 required).
struct IdentityResiduals {
  double col_sums = 0.0;        // A^T e = 0
  double row_sums = 0.0;        // A e = J(diag(s^2) - s2_bar I) e / n
  double projector = 0.0;       // A (A^T J^-1 A)^-1 A^T = J - J e e^T J / n
  double gap = 0.0;             // (co5) three-way
  double b_three_way = 0.0;     // (co6)
  double quad_form = 0.0;       // (co7), needs data
  double rank_one = 0.0;        // (co10)
  double diag_j = 0.0;          // off-diagonals of A^T J^-1 A
  double diag_s = 0.0;          // off-diagonals of A^T S A + diagonal match
  double representation = 0.0;  // (rep), needs data
  double worst() const;
};
IdentityResiduals identity_residuals(const CanonicalForm& cf, double tau2);

}  // namespace remeta
