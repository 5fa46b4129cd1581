#include "remeta/tau_estimators.hpp"

#include <cmath>

#include "remeta/errors.hpp"
#include "remeta/numerics.hpp"

namespace remeta {

namespace {

bool two_by_two(const CanonicalForm& cf) {
  return cf.n() == 2 && cf.p() == 2;
}

// When n = p = 2 every moment-type estimator, Mandel-Paule and REML
// collapse to max(0, y^2 - t^2); short-circuit to keep the equality
// exact rather than iteration-limited.
TauEstimate two_by_two_estimate(const CanonicalForm& cf, const char* method) {
  TauEstimate e;
  e.raw_value = cf.y[0] * cf.y[0] - cf.t2[0];
  e.value = std::max(0.0, e.raw_value);
  e.method = method;
  return e;
}

void validate_spec(const CanonicalForm& cf, const QuadraticFormSpec& spec) {
  if (static_cast<int>(spec.q.size()) != cf.p() - 1 ||
      static_cast<int>(spec.r.size()) != cf.p())
    throw InvalidInput("quadratic form: need p-1 q's and p r's");
  for (double v : spec.q)
    if (!(v > 0.0)) throw InvalidInput("quadratic form: q_j > 0 required");
  for (double v : spec.r)
    if (!(v > 0.0)) throw InvalidInput("quadratic form: r_i > 0 required");
}

}  // namespace

QuadraticFormSpec QuadraticFormSpec::equal(int p) {
  QuadraticFormSpec s;
  s.q.assign(p - 1, 1.0);
  s.r.assign(p, 1.0);
  return s;
}

TauEstimate dersimonian_laird(const CanonicalForm& cf) {
  if (two_by_two(cf)) return two_by_two_estimate(cf, "dl");
  const GroupedData& g = cf.g;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < g.p - 1; ++j) {
    num += cf.y[j] * cf.y[j] / cf.t2[j];
    den += 1.0 / cf.t2[j];
  }
  for (int i = 0; i < g.p; ++i) {
    num += (g.nu[i] - 1) * g.u2[i] / g.s2[i];
    den += (g.nu[i] - 1) / g.s2[i];
  }
  num -= g.n - 1;
  TauEstimate e;
  e.raw_value = num / den;
  e.value = std::max(0.0, e.raw_value);
  e.method = "dl";
  return e;
}

TauEstimate hedges(const CanonicalForm& cf) {
  if (two_by_two(cf)) return two_by_two_estimate(cf, "hedges");
  const GroupedData& g = cf.g;
  double num = 0.0;
  for (int j = 0; j < g.p - 1; ++j)
    num += cf.y[j] * cf.y[j] - cf.t2[j];
  for (int i = 0; i < g.p; ++i)
    num += (g.nu[i] - 1) * (g.u2[i] - g.s2[i]);
  TauEstimate e;
  e.raw_value = num / (g.n - 1);
  e.value = std::max(0.0, e.raw_value);
  e.method = "hedges";
  return e;
}

TauEstimate moment_estimator(const CanonicalForm& cf,
                             const QuadraticFormSpec& spec) {
  validate_spec(cf, spec);
  const GroupedData& g = cf.g;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < g.p - 1; ++j) {
    num += spec.q[j] * (cf.y[j] * cf.y[j] - cf.t2[j]);
    den += spec.q[j];
  }
  for (int i = 0; i < g.p; ++i) {
    num += (g.nu[i] - 1) * spec.r[i] * (g.u2[i] - g.s2[i]);
    den += (g.nu[i] - 1) * spec.r[i];
  }
  TauEstimate e;
  e.raw_value = num / den;
  e.value = std::max(0.0, e.raw_value);
  e.method = "moment";
  return e;
}

double mandel_paule_lhs(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  double acc = 0.0;
  for (int j = 0; j < g.p - 1; ++j)
    acc += cf.y[j] * cf.y[j] / (tau2 + cf.t2[j]);
  for (int i = 0; i < g.p; ++i)
    acc += (g.nu[i] - 1) * g.u2[i] / (tau2 + g.s2[i]);
  return acc;
}

TauEstimate mandel_paule(const CanonicalForm& cf) {
  if (two_by_two(cf)) return two_by_two_estimate(cf, "mp");
  const GroupedData& g = cf.g;
  const double target = g.n - 1;
  TauEstimate e;
  e.method = "mp";
  if (mandel_paule_lhs(cf, 0.0) <= target) {
    e.value = e.raw_value = 0.0;
    return e;
  }
  double hi = g.s2_bar();
  int evals = 0;
  while (mandel_paule_lhs(cf, hi) > target) {
    hi *= 2.0;
    if (++evals > 300)
      throw NumericalFailure("mandel_paule: bracket expansion failed");
  }
  auto f = [&](double t) {
    ++evals;
    return mandel_paule_lhs(cf, t) - target;
  };
  RootBracket br{0.0, hi, 1e-12};
  e.value = e.raw_value = solve_bracketed(f, br);
  e.iterations = evals;
  return e;
}

namespace {

double reml_step(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < g.p - 1; ++j) {
    const double d = tau2 + cf.t2[j];
    num += (cf.y[j] * cf.y[j] - cf.t2[j]) / (d * d);
    den += 1.0 / (d * d);
  }
  for (int i = 0; i < g.p; ++i) {
    const double d = tau2 + g.s2[i];
    num += (g.nu[i] - 1) * (g.u2[i] - g.s2[i]) / (d * d);
    den += (g.nu[i] - 1) / (d * d);
  }
  return num / den;
}

}  // namespace

TauEstimate reml(const CanonicalForm& cf, std::optional<double> start,
                 double tol, int max_iter) {
  if (two_by_two(cf)) return two_by_two_estimate(cf, "reml");
  double tau = start.value_or(dersimonian_laird(cf).value);
  if (tau < 0.0) throw InvalidInput("reml: start must be >= 0");
  TauEstimate e;
  e.method = "reml";
  for (int it = 1; it <= max_iter; ++it) {
    const double proposed = reml_step(cf, tau);
    const double next = std::max(0.0, proposed);
    const double diff = std::abs(next - tau);
    tau = next;
    if (diff <= tol * (1.0 + tau)) {
      // At the boundary the fixed point must not want to move up.
      if (tau == 0.0 && reml_step(cf, 0.0) > tol) continue;
      e.iterations = it;
      e.raw_value = proposed;
      e.value = tau;
      return e;
    }
  }
  throw NonConvergence("reml: no convergence", tau, max_iter);
}

double i_squared(const CanonicalForm& cf) {
  const double T = pivot_statistic(cf);
  if (T <= 0.0) return 0.0;
  return std::max(0.0, (T - (cf.n() - 1)) / T);
}

double pivot_statistic(const CanonicalForm& cf) {
  const GroupedData& g = cf.g;
  double acc = 0.0;
  for (int j = 0; j < g.p - 1; ++j)
    acc += cf.y[j] * cf.y[j] / cf.t2[j];
  for (int i = 0; i < g.p; ++i)
    acc += (g.nu[i] - 1) * g.u2[i] / g.s2[i];
  return acc;
}

double q_infinity(const CanonicalForm& cf) {
  const GroupedData& g = cf.g;
  double acc = 0.0;
  for (int j = 0; j < g.p - 1; ++j) acc += cf.y[j] * cf.y[j];
  for (int i = 0; i < g.p; ++i) acc += (g.nu[i] - 1) * g.u2[i];
  return acc;
}

double q_zero(const CanonicalForm& cf) { return pivot_statistic(cf); }

double restricted_loglik(const CanonicalForm& cf, double tau2) {
  if (tau2 < 0.0) throw InvalidInput("tau2 >= 0 required");
  const GroupedData& g = cf.g;
  double acc = std::log(static_cast<double>(g.n));
  for (int j = 0; j < g.p - 1; ++j) {
    const double d = tau2 + cf.t2[j];
    acc += cf.y[j] * cf.y[j] / d + std::log(d);
  }
  for (int i = 0; i < g.p; ++i) {
    const double d = tau2 + g.s2[i];
    acc += (g.nu[i] - 1) * (g.u2[i] / d + std::log(d));
  }
  return 0.5 * acc;
}

double restricted_loglik_xspace(const CanonicalForm& cf, double tau2) {
  if (tau2 < 0.0) throw InvalidInput("tau2 >= 0 required");
  const GroupedData& g = cf.g;
  const double xt = weighted_mean_decomposition(cf, tau2).direct;
  double acc = 0.0, wsum = 0.0;
  for (int i = 0; i < g.p; ++i) {
    const double d = tau2 + g.s2[i];
    const double dev = g.mean[i] - xt;
    acc += g.nu[i] * dev * dev / d + g.nu[i] * std::log(d) +
           (g.nu[i] - 1) * g.u2[i] / d;
    wsum += g.nu[i] / d;
  }
  acc += std::log(wsum);
  return 0.5 * acc;
}

double reml_score(const CanonicalForm& cf, double tau2) {
  const GroupedData& g = cf.g;
  double acc = 0.0;
  for (int j = 0; j < g.p - 1; ++j) {
    const double d = tau2 + cf.t2[j];
    acc += 1.0 / d - cf.y[j] * cf.y[j] / (d * d);
  }
  for (int i = 0; i < g.p; ++i) {
    const double d = tau2 + g.s2[i];
    acc += (g.nu[i] - 1) * (1.0 / d - g.u2[i] / (d * d));
  }
  return 0.5 * acc;
}

}  // namespace remeta
