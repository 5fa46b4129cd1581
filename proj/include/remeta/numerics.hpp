#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace remeta {

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
// Series for x < a + 1, Lentz continued fraction otherwise; term
// tolerance 1e-15, giving ~1e-14 absolute accuracy or better.
double gamma_p(double a, double x);

// Upper complement Q(a, x) = 1 - P(a, x), computed on the stable branch
// (no 1 - P cancellation for large x).
double gamma_q(double a, double x);

// chi-square CDF G_k(x) and survival function, k >= 1 degrees of freedom.
double chi2_cdf(int k, double x);
double chi2_sf(int k, double x);
double chi2_pdf(int k, double x);

// x with chi2_sf(k, x) below `mass`; used as a quadrature cutoff.
double chi2_tail_cutoff(int k, double mass);

struct RootBracket {
  double lo = 0.0;
  double hi = 0.0;
  double tol = 1e-13;  // relative width tolerance; 0 bisects to ulp
};

// Bracketed bisection; requires f(lo) * f(hi) <= 0 and never returns a
// point outside [lo, hi].  Throws NumericalFailure on an invalid bracket.
double solve_bracketed(const std::function<double(double)>& f,
                       const RootBracket& bracket);

// log(sum_i exp(v_i)) without overflow; -inf for an empty input.
double log_sum_exp(const std::vector<double>& v);

// Adaptive Simpson on [a, b]; abs_tol is the absolute error target.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-10);

// Same, splitting first at the supplied interior kink points.
double integrate_with_kinks(const std::function<double(double)>& f, double a,
                            double b, const std::vector<double>& kinks,
                            double abs_tol = 1e-10);

// Compensated (Neumaier) accumulation; used for fixed-order reductions.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace remeta
