#include <doctest.h>

#include <cmath>
#include <random>

#include "remeta/core_model.hpp"
#include "remeta/errors.hpp"
#include "remeta/rng.hpp"
#include "remeta/tau_estimators.hpp"

using namespace remeta;

namespace {

StudySet random_studies(const std::vector<double>& se, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  StudySet s;
  for (double e : se)
    s.studies.push_back(Study{2.0 + 1.5 * nd(rng), e, std::nullopt});
  return s;
}

// Section-1 raw-data forms, computed straight from the studies.
double dl_raw_oracle(const StudySet& s) {
  double wsum = 0.0, w2sum = 0.0, gd = 0.0;
  for (const Study& st : s.studies) {
    const double w = 1.0 / (st.std_error * st.std_error);
    wsum += w;
    w2sum += w * w;
    gd += w * st.effect;
  }
  gd /= wsum;
  double num = 0.0;
  for (const Study& st : s.studies) {
    const double d = st.effect - gd;
    num += d * d / (st.std_error * st.std_error);
  }
  num -= s.n() - 1;
  return num / (wsum - w2sum / wsum);
}

double hedges_raw_oracle(const StudySet& s) {
  double xbar = 0.0, s2sum = 0.0;
  for (const Study& st : s.studies) {
    xbar += st.effect;
    s2sum += st.std_error * st.std_error;
  }
  xbar /= s.n();
  double ss = 0.0;
  for (const Study& st : s.studies) {
    const double d = st.effect - xbar;
    ss += d * d;
  }
  return ss / (s.n() - 1) - s2sum / s.n();
}

double cochran_q_oracle(const StudySet& s) {
  double wsum = 0.0, gd = 0.0;
  for (const Study& st : s.studies) {
    const double w = 1.0 / (st.std_error * st.std_error);
    wsum += w;
    gd += w * st.effect;
  }
  gd /= wsum;
  double q = 0.0;
  for (const Study& st : s.studies) {
    const double d = st.effect - gd;
    q += d * d / (st.std_error * st.std_error);
  }
  return q;
}

CanonicalForm cf_of(const StudySet& s) { return transform(group(s)); }

}  // namespace

TEST_CASE("dersimonian-laird equals the raw-data formula") {
  std::mt19937 rng(101);
  for (int rep = 0; rep < 10; ++rep) {
    const StudySet s =
        random_studies({1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 0.5}, rng);
    const CanonicalForm cf = cf_of(s);
    const double want = dl_raw_oracle(s);
    const TauEstimate got = dersimonian_laird(cf);
    CHECK(got.raw_value == doctest::Approx(want).epsilon(1e-10));
    CHECK(got.value == std::max(0.0, got.raw_value));
  }
}

TEST_CASE("hedges equals the raw-data formula") {
  std::mt19937 rng(103);
  for (int rep = 0; rep < 10; ++rep) {
    const StudySet s = random_studies({0.7, 1.3, 1.3, 2.2, 4.0}, rng);
    const CanonicalForm cf = cf_of(s);
    CHECK(hedges(cf).raw_value ==
          doctest::Approx(hedges_raw_oracle(s)).epsilon(1e-10));
  }
}

TEST_CASE("n = p = 2: all four estimators collapse to max(0, y^2 - t^2)") {
  std::mt19937 rng(105);
  for (int rep = 0; rep < 5; ++rep) {
    const StudySet s = random_studies({1.0, 2.0}, rng);
    const CanonicalForm cf = cf_of(s);
    const double want = std::max(0.0, cf.y[0] * cf.y[0] - cf.t2[0]);
    CHECK(dersimonian_laird(cf).value == want);
    CHECK(hedges(cf).value == want);
    CHECK(mandel_paule(cf).value == want);
    CHECK(reml(cf).value == want);
  }
}

TEST_CASE("moment estimator reproduces hedges and dl at the named specs") {
  std::mt19937 rng(107);
  const StudySet s = random_studies({1.0, 1.0, 2.0, 2.0, 3.0, 5.0}, rng);
  const CanonicalForm cf = cf_of(s);
  CHECK(moment_estimator(cf, QuadraticFormSpec::equal(cf.p())).raw_value ==
        doctest::Approx(hedges(cf).raw_value).epsilon(1e-12));
  QuadraticFormSpec dl_spec;
  for (double t2 : cf.t2) dl_spec.q.push_back(1.0 / t2);
  for (double s2 : cf.g.s2) dl_spec.r.push_back(1.0 / s2);
  CHECK(moment_estimator(cf, dl_spec).raw_value ==
        doctest::Approx(dersimonian_laird(cf).raw_value).epsilon(1e-12));
}

TEST_CASE("moment estimator raw value is unbiased (MC smoke)") {
  const std::vector<double> s2{0.5, 1.0, 2.5};
  const std::vector<int> nu{2, 1, 3};
  const CanonicalForm design = design_form(s2, nu);
  const double tau2 = 1.7;
  QuadraticFormSpec spec;
  spec.q = {0.9, 2.0};
  spec.r = {1.5, 0.4, 1.1};
  RngStream gen(424242, 17);
  const int reps = 40000;
  double acc = 0.0, acc2 = 0.0;
  CanonicalForm cf = design;
  for (int r = 0; r < reps; ++r) {
    for (int j = 0; j < design.p() - 1; ++j)
      cf.y[j] = std::sqrt(tau2 + design.t2[j]) * gen.normal();
    for (int i = 0; i < design.p(); ++i)
      cf.g.u2[i] = nu[i] > 1
                       ? (tau2 + s2[i]) * gen.chi2(nu[i] - 1) / (nu[i] - 1)
                       : 0.0;
    const double v = moment_estimator(cf, spec).raw_value;
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / reps;
  const double sd = std::sqrt((acc2 - reps * mean * mean) / (reps - 1.0));
  CHECK(std::abs(mean - tau2) < 3.0 * sd / std::sqrt(double(reps)));
}

TEST_CASE("mandel-paule solves its equation and truncates") {
  std::mt19937 rng(109);
  int solved = 0, truncated = 0;
  for (int rep = 0; rep < 40; ++rep) {
    const StudySet s = random_studies({0.6, 1.0, 1.7, 2.4, 2.4}, rng);
    const CanonicalForm cf = cf_of(s);
    const TauEstimate mp = mandel_paule(cf);
    if (mp.value > 0.0) {
      ++solved;
      CHECK(mandel_paule_lhs(cf, mp.value) ==
            doctest::Approx(cf.n() - 1.0).epsilon(1e-10));
    } else {
      ++truncated;
      CHECK(mandel_paule_lhs(cf, 0.0) <= cf.n() - 1.0);
    }
  }
  CHECK(solved > 0);  // both branches exercised over 40 draws
  CHECK(truncated > 0);
}

TEST_CASE("mandel-paule lhs is strictly decreasing") {
  std::mt19937 rng(111);
  const StudySet s = random_studies({1.0, 2.0, 2.0, 3.5}, rng);
  const CanonicalForm cf = cf_of(s);
  double prev = mandel_paule_lhs(cf, 0.0);
  for (double t = 0.25; t < 20.0; t += 0.25) {
    const double cur = mandel_paule_lhs(cf, t);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("mandel-paule n = p = 3 closed form") {
  std::mt19937 rng(113);
  int checked = 0;
  while (checked < 25) {
    const StudySet s = random_studies({0.8, 1.4, 2.9}, rng);
    const CanonicalForm cf = cf_of(s);
    const double y1 = cf.y[0], y2 = cf.y[1];
    const double t1 = cf.t2[0], t2 = cf.t2[1];
    if (y1 * y1 / t1 + y2 * y2 / t2 < 2.0) continue;
    ++checked;
    const double sum = (y1 * y1 + y2 * y2) / 4.0;
    const double closed =
        sum - (t1 + t2) / 2.0 +
        std::sqrt(sum * sum + (t1 - t2) * (t1 - t2) / 4.0 -
                  (t1 - t2) * (y1 * y1 - y2 * y2) / 4.0);
    CHECK(mandel_paule(cf).value == doctest::Approx(closed).epsilon(1e-10));
  }
}

TEST_CASE("reml zeroes the restricted score at interior optima") {
  std::mt19937 rng(115);
  int interior = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const StudySet s = random_studies({1.0, 1.0, 1.8, 2.6, 3.1, 4.4}, rng);
    const CanonicalForm cf = cf_of(s);
    const TauEstimate r = reml(cf);
    if (r.value > 1e-8) {
      ++interior;
      CHECK(std::abs(reml_score(cf, r.value)) < 1e-8);
    } else {
      // boundary solutions must not want to move up
      CHECK(reml_score(cf, 0.0) >= -1e-8);
    }
    CHECK(r.iterations > 0);
  }
  CHECK(interior > 0);
}

TEST_CASE("reml on balanced data returns zero") {
  GroupedData g;
  g.p = 2;
  g.n = 4;
  g.s2 = {1.0, 2.0};
  g.nu = {2, 2};
  g.mean = {0.0, 0.0};
  g.u2 = {1.0, 2.0};  // u_i^2 = s_i^2 exactly
  CanonicalForm cf = transform(g);
  for (size_t j = 0; j < cf.t2.size(); ++j) cf.y[j] = std::sqrt(cf.t2[j]);
  CHECK(reml(cf).value == 0.0);
  CHECK(dersimonian_laird(cf).raw_value == doctest::Approx(0.0));
  CHECK(hedges(cf).raw_value == doctest::Approx(0.0));
}

TEST_CASE("i_squared: fixed points and raw-data oracle") {
  std::mt19937 rng(117);
  const StudySet s = random_studies({1.0, 1.0, 2.0, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  const double T = pivot_statistic(cf);
  CHECK(T == doctest::Approx(cochran_q_oracle(s)).epsilon(1e-10));
  const double i2 = i_squared(cf);
  CHECK(i2 == doctest::Approx(std::max(0.0, (T - (cf.n() - 1)) / T)));
  CHECK(i2 >= 0.0);
  CHECK(i2 < 1.0);
}

TEST_CASE("restricted log-likelihood: y-form equals x-form") {
  std::mt19937 rng(119);
  for (int rep = 0; rep < 10; ++rep) {
    const StudySet s = random_studies({0.9, 1.1, 1.1, 2.0, 3.3}, rng);
    const CanonicalForm cf = cf_of(s);
    for (double tau2 : {0.0, 0.3, 1.0, 7.0}) {
      const double a = restricted_loglik(cf, tau2);
      const double b = restricted_loglik_xspace(cf, tau2);
      CHECK(a == doctest::Approx(b).epsilon(1e-10));
    }
  }
}

TEST_CASE("restricted log-likelihood differences are shift invariant") {
  std::mt19937 rng(121);
  StudySet s = random_studies({1.0, 1.6, 2.2}, rng);
  const CanonicalForm cf = cf_of(s);
  StudySet sh = s;
  for (auto& st : sh.studies) st.effect += 55.5;
  const CanonicalForm cf2 = cf_of(sh);
  const double d1 = restricted_loglik(cf, 1.0) - restricted_loglik(cf, 2.5);
  const double d2 = restricted_loglik(cf2, 1.0) - restricted_loglik(cf2, 2.5);
  CHECK(d1 == doctest::Approx(d2).epsilon(1e-9));
}

TEST_CASE("reml score matches finite differences of the log-likelihood") {
  std::mt19937 rng(123);
  const StudySet s = random_studies({1.0, 2.0, 2.0, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  for (double tau2 : {0.2, 1.0, 4.0}) {
    const double h = 1e-6 * (1.0 + tau2);
    const double fd =
        (restricted_loglik(cf, tau2 + h) - restricted_loglik(cf, tau2 - h)) /
        (2.0 * h);
    CHECK(reml_score(cf, tau2) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("estimators are shift invariant and scale equivariant") {
  std::mt19937 rng(125);
  StudySet s = random_studies({0.8, 1.5, 1.5, 2.5}, rng);
  const CanonicalForm cf = cf_of(s);

  StudySet shifted = s;
  for (auto& st : shifted.studies) st.effect += 17.0;
  const CanonicalForm cfs = cf_of(shifted);

  StudySet scaled = s;
  const double lam = 2.75;
  for (auto& st : scaled.studies) {
    st.effect *= lam;
    st.std_error *= lam;
  }
  const CanonicalForm cfl = cf_of(scaled);

  auto check_all = [&](auto fn) {
    const double base = fn(cf);
    CHECK(fn(cfs) == doctest::Approx(base).epsilon(1e-8));
    CHECK(fn(cfl) == doctest::Approx(base * lam * lam).epsilon(1e-8));
  };
  check_all(
      [](const CanonicalForm& c) { return dersimonian_laird(c).raw_value; });
  check_all([](const CanonicalForm& c) { return hedges(c).raw_value; });
  check_all([](const CanonicalForm& c) { return mandel_paule(c).value; });
  check_all([](const CanonicalForm& c) { return reml(c).value; });
}

TEST_CASE("balanced y^2 = t^2, u^2 = s^2 zeroes every moment estimator") {
  GroupedData g;
  g.p = 3;
  g.n = 5;
  g.s2 = {1.0, 2.0, 4.0};
  g.nu = {1, 2, 2};
  g.mean = {0.0, 0.0, 0.0};
  g.u2 = {0.0, 2.0, 4.0};
  CanonicalForm cf = transform(g);
  for (size_t j = 0; j < cf.t2.size(); ++j) cf.y[j] = std::sqrt(cf.t2[j]);
  CHECK(dersimonian_laird(cf).raw_value == doctest::Approx(0.0));
  CHECK(hedges(cf).raw_value == doctest::Approx(0.0));
  QuadraticFormSpec spec;
  spec.q = {0.4, 3.0};
  spec.r = {1.0, 2.0, 0.5};
  CHECK(moment_estimator(cf, spec).raw_value == doctest::Approx(0.0));
  CHECK(mandel_paule(cf).value == 0.0);
}
