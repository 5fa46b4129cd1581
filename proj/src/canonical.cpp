#include "remeta/canonical.hpp"

#include <algorithm>
#include <cmath>

#include "remeta/errors.hpp"
#include "remeta/numerics.hpp"

namespace remeta {

namespace {

void require_p2(const GroupedData& g) {
  if (g.p < 2)
    throw UnsupportedInput(
        "canonical operations require at least 2 distinct variances (p >= 2)");
}

double rel(double a, double b, double floor_scale = 0.0) {
  const double scale =
      std::max({std::abs(a), std::abs(b), floor_scale, 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace

std::vector<double> q_polynomial(const GroupedData& g) {
  require_p2(g);
  std::vector<double> coeffs(g.p, 0.0);  // degree p-1
  for (int i = 0; i < g.p; ++i) {
    std::vector<double> prod{1.0};
    for (int k = 0; k < g.p; ++k) {
      if (k == i) continue;
      std::vector<double> next(prod.size() + 1, 0.0);
      for (size_t d = 0; d < prod.size(); ++d) {
        next[d] += prod[d] * g.s2[k];
        next[d + 1] += prod[d];
      }
      prod = std::move(next);
    }
    for (size_t d = 0; d < prod.size(); ++d) coeffs[d] += g.nu[i] * prod[d];
  }
  return coeffs;
}

double q_at_neg(const GroupedData& g, double w) {
  double acc = 0.0;
  for (int i = 0; i < g.p; ++i) {
    double term = g.nu[i];
    for (int k = 0; k < g.p; ++k)
      if (k != i) term *= g.s2[k] - w;
    acc += term;
  }
  return acc;
}

// d/dv Q(v) at v = -w, by the product-rule sum (no numeric
// differentiation: (coe)/(co6) need it to full precision).
double q_prime_at_neg(const GroupedData& g, double w) {
  double acc = 0.0;
  for (int i = 0; i < g.p; ++i) {
    for (int m = 0; m < g.p; ++m) {
      if (m == i) continue;
      double term = g.nu[i];
      for (int k = 0; k < g.p; ++k)
        if (k != i && k != m) term *= g.s2[k] - w;
      acc += term;
    }
  }
  return acc;
}

double m_at_neg(const GroupedData& g, double w) {
  double prod = 1.0;
  for (int i = 0; i < g.p; ++i) prod *= g.s2[i] - w;
  return prod;
}

std::vector<double> find_roots(const GroupedData& g) {
  require_p2(g);
  std::vector<double> roots;
  roots.reserve(g.p - 1);
  for (int i = 0; i + 1 < g.p; ++i) {
    // Q(-w) changes sign between adjacent distinct variances.
    RootBracket br{g.s2[i], g.s2[i + 1], 0.0};
    double root = solve_bracketed([&g](double w) { return q_at_neg(g, w); }, br);
    if (!(root > g.s2[i] && root < g.s2[i + 1]))
      throw NumericalFailure("root escaped its interlacing interval");
    roots.push_back(root);
  }
  return roots;
}

void a_matrix(const GroupedData& g, const std::vector<double>& t2,
              std::vector<double>& A, std::vector<double>& b) {
  require_p2(g);
  const int p = g.p;
  const int pm1 = p - 1;
  A.assign(static_cast<size_t>(p) * pm1, 0.0);
  b.assign(pm1, 0.0);
  const double s2_scale = g.s2.back();
  for (int j = 0; j < pm1; ++j) {
    const double mj = m_at_neg(g, t2[j]);
    const double qpj = q_prime_at_neg(g, t2[j]);
    if (qpj == 0.0) throw NumericalFailure("Q' vanished at a root");
    b[j] = -mj / qpj;
    if (!(b[j] > 0.0))
      throw NumericalFailure("b_j must be positive; got " +
                             std::to_string(b[j]));
    for (int i = 0; i < p; ++i) {
      const double denom = t2[j] - g.s2[i];
      if (std::abs(denom) <= 1e-14 * s2_scale)
        throw NumericalFailure(
            "t_j^2 too close to a group variance; ill-conditioned design");
      A[static_cast<size_t>(i) * pm1 + j] = g.nu[i] * mj / (qpj * denom);
    }
    // consistency guard against (co6)
    double b_alt = 0.0;
    for (int i = 0; i < p; ++i) {
      const double aij = A[static_cast<size_t>(i) * pm1 + j];
      b_alt += aij * aij / g.nu[i];
    }
    if (rel(b[j], b_alt) > 1e-6)
      throw NumericalFailure("b_j cross-check failed; design too degenerate");
  }
}

CanonicalForm transform(const GroupedData& g) {
  require_p2(g);
  CanonicalForm cf;
  cf.g = g;
  cf.t2 = find_roots(g);
  a_matrix(g, cf.t2, cf.A, cf.b);
  cf.y.assign(g.p - 1, 0.0);
  for (int j = 0; j < g.p - 1; ++j) {
    double acc = 0.0;
    for (int i = 0; i < g.p; ++i) acc += cf.a(i, j) * g.mean[i];
    cf.y[j] = acc / std::sqrt(cf.b[j]);
  }
  return cf;
}

CanonicalForm design_form(const std::vector<double>& s2,
                          const std::vector<int>& nu) {
  if (s2.size() != nu.size() || s2.empty())
    throw InvalidInput("design: s2 and nu must be non-empty, equal length");
  GroupedData g;
  g.p = static_cast<int>(s2.size());
  g.s2 = s2;
  g.nu = nu;
  g.n = 0;
  for (size_t i = 0; i < nu.size(); ++i) {
    if (nu[i] < 1) throw InvalidInput("design: nu_i >= 1 required");
    if (!(s2[i] > 0.0)) throw InvalidInput("design: s2_i > 0 required");
    if (i > 0 && !(s2[i] > s2[i - 1]))
      throw InvalidInput("design: s2 must be strictly increasing");
    g.n += nu[i];
  }
  g.mean.assign(g.p, 0.0);
  g.u2.assign(g.p, 0.0);
  return transform(g);
}

MeanDecomposition weighted_mean_decomposition(const CanonicalForm& cf,
                                              double tau2) {
  if (tau2 < 0.0) throw InvalidInput("tau2 >= 0 required");
  const GroupedData& g = cf.g;
  MeanDecomposition out;
  double wsum = 0.0, xw = 0.0;
  for (int i = 0; i < g.p; ++i) {
    const double w = g.nu[i] / (tau2 + g.s2[i]);
    wsum += w;
    xw += w * g.mean[i];
  }
  out.direct = xw / wsum;
  out.x_bar = g.grand_mean();
  double corr = 0.0;
  out.root_terms.resize(cf.t2.size());
  for (size_t j = 0; j < cf.t2.size(); ++j) {
    out.root_terms[j] = std::sqrt(cf.b[j]) * cf.y[j] / (tau2 + cf.t2[j]);
    corr += out.root_terms[j];
  }
  out.representation = out.x_bar - corr;
  return out;
}

double variance_gap(const CanonicalForm& cf, double tau2) {
  double acc = 0.0;
  for (size_t j = 0; j < cf.t2.size(); ++j)
    acc += cf.b[j] / (tau2 + cf.t2[j]);
  return acc;
}

double variance_gap_weights(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  double wsum = 0.0;
  for (int i = 0; i < g.p; ++i) wsum += g.nu[i] / (tau2 + g.s2[i]);
  return (tau2 + g.s2_bar()) / g.n - 1.0 / wsum;
}

double variance_gap_poly(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  const double s2b = g.s2_bar();
  double num = 0.0;
  for (int i = 0; i < g.p; ++i) {
    double term = g.nu[i] * (s2b - g.s2[i]);
    for (int k = 0; k < g.p; ++k)
      if (k != i) term *= tau2 + g.s2[k];
    num += term;
  }
  double q = 0.0;
  for (int i = 0; i < g.p; ++i) {
    double term = g.nu[i];
    for (int k = 0; k < g.p; ++k)
      if (k != i) term *= tau2 + g.s2[k];
    q += term;
  }
  return num / (g.n * q);
}

double quad_form_identity_residual(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  const double xt = weighted_mean_decomposition(cf, tau2).direct;
  double lhs = 0.0;
  for (int i = 0; i < g.p; ++i) {
    const double d = g.mean[i] - xt;
    lhs += g.nu[i] * d * d / (tau2 + g.s2[i]);
  }
  double rhs = 0.0;
  for (size_t j = 0; j < cf.t2.size(); ++j)
    rhs += cf.y[j] * cf.y[j] / (tau2 + cf.t2[j]);
  return std::abs(lhs - rhs);
}

double IdentityResiduals::worst() const {
  return std::max({col_sums, row_sums, projector, gap, b_three_way, quad_form,
                   rank_one, diag_j, diag_s, representation});
}

IdentityResiduals identity_residuals(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  const int p = g.p;
  const int pm1 = p - 1;
  IdentityResiduals r;

  // (co0): column sums, scaled by the column 1-norm.
  for (int j = 0; j < pm1; ++j) {
    double sum = 0.0, norm = 0.0;
    for (int i = 0; i < p; ++i) {
      sum += cf.a(i, j);
      norm += std::abs(cf.a(i, j));
    }
    r.col_sums = std::max(r.col_sums, std::abs(sum) / std::max(norm, 1e-300));
  }

  // (co2): row sums against nu_i (s_i^2 - s2_bar)/n.
  {
    const double s2b = g.s2_bar();
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i < p; ++i) {
      double rs = 0.0;
      for (int j = 0; j < pm1; ++j) rs += cf.a(i, j);
      const double want = g.nu[i] * (g.s2[i] - s2b) / g.n;
      worst = std::max(worst, std::abs(rs - want));
      scale = std::max(scale, std::abs(want));
    }
    r.row_sums = worst / std::max(scale, 1e-300);
  }

  // Diagonality of A^T J^-1 A and A^T S A; diagonals b_j and b_j t_j^2.
  {
    double worst_j = 0.0, worst_s = 0.0;
    const double scale_j =
        *std::max_element(cf.b.begin(), cf.b.end());
    double scale_s = 0.0;
    for (int j = 0; j < pm1; ++j)
      scale_s = std::max(scale_s, cf.b[j] * cf.t2[j]);
    for (int j = 0; j < pm1; ++j) {
      for (int l = 0; l < pm1; ++l) {
        double accj = 0.0, accs = 0.0;
        for (int i = 0; i < p; ++i) {
          accj += cf.a(i, j) * cf.a(i, l) / g.nu[i];
          accs += cf.a(i, j) * cf.a(i, l) * g.s2[i] / g.nu[i];
        }
        const double wantj = (j == l) ? cf.b[j] : 0.0;
        const double wants = (j == l) ? cf.b[j] * cf.t2[j] : 0.0;
        worst_j = std::max(worst_j, std::abs(accj - wantj));
        worst_s = std::max(worst_s, std::abs(accs - wants));
      }
    }
    r.diag_j = worst_j / scale_j;
    r.diag_s = worst_s / scale_s;
  }

  // (co3): A diag(1/b) A^T = J - J e e^T J / n.
  {
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i < p; ++i) {
      for (int k = 0; k < p; ++k) {
        double acc = 0.0;
        for (int j = 0; j < pm1; ++j)
          acc += cf.a(i, j) * cf.a(k, j) / cf.b[j];
        const double want = (i == k ? g.nu[i] : 0.0) -
                            static_cast<double>(g.nu[i]) * g.nu[k] / g.n;
        worst = std::max(worst, std::abs(acc - want));
        scale = std::max(scale, std::abs(want));
      }
    }
    r.projector = worst / std::max(scale, 1e-300);
  }

  // (co5): the b-sum, the weights form, the polynomial ratio.
  {
    const double g1 = variance_gap(cf, tau2);
    const double g2 = variance_gap_weights(cf, tau2);
    const double g3 = variance_gap_poly(cf, tau2);
    r.gap = std::max(rel(g1, g2), rel(g1, g3));
  }

  // (co6): three expressions for b_j.
  for (int j = 0; j < pm1; ++j) {
    const double b1 = cf.b[j];
    double b2 = 0.0, b3 = 0.0;
    for (int i = 0; i < p; ++i) {
      const double aij = cf.a(i, j);
      b2 += aij * aij / g.nu[i];
      b3 += g.s2[i] * aij * aij / g.nu[i];
    }
    b3 /= cf.t2[j];
    r.b_three_way =
        std::max({r.b_three_way, rel(b1, b2), rel(b1, b3)});
  }

  // (co7) on the stored data.
  {
    double lhs = 0.0;
    const double xt = weighted_mean_decomposition(cf, tau2).direct;
    for (int i = 0; i < p; ++i) {
      const double d = g.mean[i] - xt;
      lhs += g.nu[i] * d * d / (tau2 + g.s2[i]);
    }
    double rhs = 0.0;
    for (int j = 0; j < pm1; ++j)
      rhs += cf.y[j] * cf.y[j] / (tau2 + cf.t2[j]);
    r.quad_form = rel(lhs, rhs);
  }

  // (co10): A^T J^-1 C^-1 J^-1 A = diag(b h) + (sum nu/(tau2+s^2)) (bh)(bh)^T.
  {
    std::vector<double> bh(pm1);
    for (int j = 0; j < pm1; ++j) bh[j] = cf.b[j] / (tau2 + cf.t2[j]);
    double wsum = 0.0;
    for (int i = 0; i < p; ++i) wsum += g.nu[i] / (tau2 + g.s2[i]);
    double worst = 0.0, scale = 0.0;
    for (int j = 0; j < pm1; ++j) {
      for (int l = 0; l < pm1; ++l) {
        double acc = 0.0;
        for (int i = 0; i < p; ++i)
          acc += cf.a(i, j) * cf.a(i, l) /
                 (g.nu[i] * (tau2 + g.s2[i]));
        const double want = (j == l ? bh[j] : 0.0) + wsum * bh[j] * bh[l];
        worst = std::max(worst, std::abs(acc - want));
        scale = std::max(scale, std::abs(want));
      }
    }
    r.rank_one = worst / std::max(scale, 1e-300);
  }

  // (rep): x_tilde two ways, scaled by the data magnitude.
  {
    const MeanDecomposition d = weighted_mean_decomposition(cf, tau2);
    double data_scale = 1e-300;
    for (int i = 0; i < p; ++i)
      data_scale = std::max(data_scale, std::abs(g.mean[i]));
    r.representation =
        std::abs(d.direct - d.representation) /
        std::max({std::abs(d.direct), data_scale, 1e-300});
  }

  return r;
}

}  // namespace remeta
