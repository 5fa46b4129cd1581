#include "remeta/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "remeta/errors.hpp"

namespace remeta {

namespace {

constexpr double kTermTol = 1e-15;
constexpr int kMaxTerms = 10000;

double lgamma_safe(double a) {
#if defined(__GLIBC__) || defined(__APPLE__)
  int sign = 0;
  return lgamma_r(a, &sign);
#else
  return std::lgamma(a);
#endif
}

// exp(-x + a ln x - lgamma(a)) guarded against 0 * inf at x = 0.
double gamma_prefactor(double a, double x) {
  if (x <= 0.0) return 0.0;
  return std::exp(-x + a * std::log(x) - lgamma_safe(a));
}

double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int k = 0; k < kMaxTerms; ++k) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kTermTol)
      return sum * gamma_prefactor(a, x);
  }
  throw NumericalFailure("gamma_p: series did not converge");
}

double gamma_q_cf(double a, double x) {
  const double fpmin = std::numeric_limits<double>::min() /
                       std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxTerms; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kTermTol) return gamma_prefactor(a, x) * h;
  }
  throw NumericalFailure("gamma_q: continued fraction did not converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0 || std::isnan(a) || std::isnan(x))
    throw InvalidInput("gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0 || std::isnan(a) || std::isnan(x))
    throw InvalidInput("gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_cdf(int k, double x) {
  if (k < 1) throw InvalidInput("chi2_cdf: k >= 1 required");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi2_sf(int k, double x) {
  if (k < 1) throw InvalidInput("chi2_sf: k >= 1 required");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * k, 0.5 * x);
}

double chi2_pdf(int k, double x) {
  if (k < 1) throw InvalidInput("chi2_pdf: k >= 1 required");
  if (x <= 0.0) return 0.0;
  double a = 0.5 * k;
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - lgamma_safe(a) -
                  a * std::numbers::ln2);
}

double chi2_tail_cutoff(int k, double mass) {
  double x = static_cast<double>(k) + 10.0;
  while (chi2_sf(k, x) > mass) x *= 1.5;
  return x;
}

double solve_bracketed(const std::function<double(double)>& f,
                       const RootBracket& bracket) {
  double lo = bracket.lo, hi = bracket.hi;
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw NumericalFailure("solve_bracketed: bad interval");
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw NumericalFailure("solve_bracketed: no sign change on bracket");
  for (int it = 0; it < 2000; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // bracket at ulp width
    if (hi - lo <= bracket.tol * 0.5 * (std::abs(lo) + std::abs(hi))) break;
    double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = *std::max_element(v.begin(), v.end());
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

namespace {

struct SimpsonPanel {
  double fa, fm, fb;
  double estimate(double a, double b) const {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  }
};

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = f(lm);
  double frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol) {
  if (a == b) return 0.0;
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, abs_tol, 48);
}

double integrate_with_kinks(const std::function<double(double)>& f, double a,
                            double b, const std::vector<double>& kinks,
                            double abs_tol) {
  std::vector<double> pts;
  pts.push_back(a);
  for (double k : kinks)
    if (k > a && k < b) pts.push_back(k);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  double piece_tol = abs_tol / static_cast<double>(pts.size() - 1);
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    total += integrate(f, pts[i], pts[i + 1], piece_tol);
  return total;
}

}  // namespace remeta
