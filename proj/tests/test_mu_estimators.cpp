#include <doctest.h>

#include <cmath>
#include <random>

#include "remeta/core_model.hpp"
#include "remeta/errors.hpp"
#include "remeta/mu_estimators.hpp"
#include "remeta/rng.hpp"

using namespace remeta;

namespace {

StudySet random_studies(const std::vector<double>& se, std::mt19937& rng,
                        double mu = 1.0, double tau = 1.0) {
  std::normal_distribution<double> nd;
  StudySet s;
  for (double e : se)
    s.studies.push_back(
        Study{mu + tau * nd(rng) + e * nd(rng), e, std::nullopt});
  return s;
}

CanonicalForm cf_of(const StudySet& s) { return transform(group(s)); }

const std::vector<WeightRule> kAllRules = [] {
  std::vector<WeightRule> rules;
  for (const char* name :
       {"mean", "gd", "dl", "hedges", "mp", "reml", "delta1", "delta0", "mh",
        "oracle:0.8", "stein:alpha=2;q=1;r=1", "bayes:grid=0.01,100,60"})
    rules.push_back(WeightRule::parse(name));
  return rules;
}();

}  // namespace

TEST_CASE("sample mean rule returns x_bar exactly") {
  std::mt19937 rng(201);
  const StudySet s = random_studies({1.0, 1.5, 2.0, 3.0, 0.4}, rng);
  const CanonicalForm cf = cf_of(s);
  const MuEstimate est = estimate_mu(cf, WeightRule::parse("mean"));
  double xbar = 0.0;
  for (const auto& st : s.studies) xbar += st.effect;
  xbar /= s.n();
  CHECK(est.value == doctest::Approx(xbar).epsilon(1e-14));
  for (double wj : est.w) CHECK(wj == 0.0);
}

TEST_CASE("graybill-deal rule matches its definition") {
  std::mt19937 rng(203);
  const StudySet s = random_studies({1.0, 1.0, 2.0, 2.5}, rng);
  const CanonicalForm cf = cf_of(s);
  const MuEstimate est = estimate_mu(cf, WeightRule::parse("gd"));
  double num = 0.0, den = 0.0;
  for (const auto& st : s.studies) {
    const double w = 1.0 / (st.std_error * st.std_error);
    num += w * st.effect;
    den += w;
  }
  CHECK(est.value == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("p=2 closed form for plug-in rules") {
  // delta = x_bar - nu1 nu2 (s1^2-s2^2)(x1-x2) / (n^2 (tau2+t^2)); the
  // (x1+x2)/2 version of the display holds when nu1 = nu2
  std::mt19937 rng(205);
  for (auto [nu1, nu2] : {std::pair{1, 1}, std::pair{2, 2}, std::pair{1, 3}}) {
    std::vector<double> se;
    for (int k = 0; k < nu1; ++k) se.push_back(1.0);
    for (int k = 0; k < nu2; ++k) se.push_back(2.0);
    const StudySet s = random_studies(se, rng);
    const GroupedData g = group(s);
    if (g.p != 2) continue;
    const CanonicalForm cf = transform(g);
    const double tau2 = 0.8;
    const MuEstimate est = estimate_mu(cf, WeightRule::parse("oracle:0.8"));
    const int n = g.n;
    const double closed =
        g.grand_mean() - g.nu[0] * g.nu[1] * (g.s2[0] - g.s2[1]) *
                             (g.mean[0] - g.mean[1]) /
                             (static_cast<double>(n) * n * (tau2 + cf.t2[0]));
    CHECK(est.value == doctest::Approx(closed).epsilon(1e-12));
    if (nu1 == nu2) {
      const double display =
          0.5 * (g.mean[0] + g.mean[1]) -
          g.nu[0] * g.nu[1] * (g.s2[0] - g.s2[1]) * (g.mean[0] - g.mean[1]) /
              (static_cast<double>(n) * n * (tau2 + cf.t2[0]));
      CHECK(est.value == doctest::Approx(display).epsilon(1e-12));
    }
  }
}

TEST_CASE("delta1 equals the clamped equal-coefficient stein rule") {
  std::mt19937 rng(207);
  const StudySet s = random_studies({1.0, 1.0, 2.0, 3.0, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  const auto d1 = rule_weights(cf, WeightRule::parse("delta1"));
  const auto st =
      stein_weights(cf, QuadraticFormSpec::equal(cf.p()), cf.n() - 3);
  for (size_t j = 0; j < d1.size(); ++j)
    CHECK(d1[j] == doctest::Approx(st[j]).epsilon(1e-14));
  // and the explicit q_infinity formula
  const double qi = q_infinity(cf);
  for (size_t j = 0; j < d1.size(); ++j)
    CHECK(d1[j] ==
          doctest::Approx(std::min((cf.n() - 3) / qi, 1.0 / cf.t2[j])));
}

TEST_CASE("delta0 weights match their display") {
  std::mt19937 rng(209);
  const StudySet s = random_studies({0.7, 1.4, 1.4, 2.2, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  const auto w = rule_weights(cf, WeightRule::parse("delta0"));
  const double q0 = q_zero(cf);
  for (size_t j = 0; j < w.size(); ++j)
    CHECK(w[j] == doctest::Approx(std::min((cf.n() - 1) / q0, 1.0) / cf.t2[j])
                      .epsilon(1e-14));
}

TEST_CASE("modified hedges plug-in uses its tau2 display") {
  std::mt19937 rng(211);
  const StudySet s = random_studies({1.0, 2.0, 2.0, 2.8, 3.5}, rng);
  const CanonicalForm cf = cf_of(s);
  const auto w = rule_weights(cf, WeightRule::parse("mh"));
  double q = q_infinity(cf);
  for (double t2 : cf.t2) q -= t2;
  for (int i = 0; i < cf.p(); ++i) q -= (cf.g.nu[i] - 1) * cf.g.s2[i];
  const double tau2 = std::max(0.0, q / (cf.n() - 3));
  for (size_t j = 0; j < w.size(); ++j)
    CHECK(w[j] == doctest::Approx(1.0 / (tau2 + cf.t2[j])).epsilon(1e-14));
}

TEST_CASE("stein weights: branches and the q = 0 limit") {
  std::mt19937 rng(213);
  const StudySet s = random_studies({1.0, 2.0, 3.0, 4.0, 5.0}, rng);
  CanonicalForm cf = cf_of(s);
  const auto spec = QuadraticFormSpec::equal(cf.p());
  // huge data -> far from the clamp
  for (auto& yj : cf.y) yj = 100.0 + yj;
  const double q = q_infinity(cf);
  const auto w = stein_weights(cf, spec, 2.5);
  for (size_t j = 0; j < w.size(); ++j)
    CHECK(w[j] == doctest::Approx(2.5 / q).epsilon(1e-12));
  // all data at the center -> cap branch
  for (auto& yj : cf.y) yj = 0.0;
  for (auto& u : cf.g.u2) u = 0.0;
  const auto w0 = stein_weights(cf, spec, 2.5);
  for (size_t j = 0; j < w0.size(); ++j)
    CHECK(w0[j] == doctest::Approx(1.0 / cf.t2[j]));
}

TEST_CASE("weights never leave [0, t_j^-2]") {
  std::mt19937 rng(215);
  for (int rep = 0; rep < 10; ++rep) {
    const StudySet s = random_studies({0.5, 1.0, 1.0, 2.0, 4.0, 4.0}, rng);
    const CanonicalForm cf = cf_of(s);
    for (const WeightRule& rule : kAllRules) {
      const auto w = rule_weights(cf, rule);
      for (size_t j = 0; j < w.size(); ++j) {
        CHECK(w[j] >= 0.0);
        CHECK(w[j] <= 1.0 / cf.t2[j] + 1e-15);
      }
    }
  }
}

TEST_CASE("omega weights: normalization, limits, oracle identity") {
  std::mt19937 rng(217);
  const StudySet s = random_studies({1.0, 1.0, 2.0, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  const GroupedData& g = cf.g;

  // w = 0 gives nu_i/n
  auto omega0 = omega_weights(cf, std::vector<double>(cf.p() - 1, 0.0));
  for (int i = 0; i < cf.p(); ++i)
    CHECK(omega0[i] == doctest::Approx(double(g.nu[i]) / g.n));

  // plug-in weights recover the normalized (we) weights (identity coo)
  const double tau2 = 0.6;
  std::vector<double> w(cf.p() - 1);
  for (int j = 0; j < cf.p() - 1; ++j) w[j] = 1.0 / (tau2 + cf.t2[j]);
  const auto om = omega_weights(cf, w);
  double wsum = 0.0;
  for (int i = 0; i < cf.p(); ++i) wsum += g.nu[i] / (tau2 + g.s2[i]);
  double total = 0.0;
  for (int i = 0; i < cf.p(); ++i) {
    CHECK(om[i] ==
          doctest::Approx(g.nu[i] / (tau2 + g.s2[i]) / wsum).epsilon(1e-10));
    total += om[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("estimate_mu: delta equals the omega-weighted group means") {
  std::mt19937 rng(219);
  const StudySet s = random_studies({0.8, 1.2, 1.2, 2.0, 2.8}, rng);
  const CanonicalForm cf = cf_of(s);
  for (const WeightRule& rule : kAllRules) {
    const MuEstimate est = estimate_mu(cf, rule);
    double acc = 0.0, wsum = 0.0;
    for (int i = 0; i < cf.p(); ++i) {
      acc += est.omega[i] * cf.g.mean[i];
      wsum += est.omega[i];
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(est.value == doctest::Approx(acc).epsilon(1e-11));
  }
}

TEST_CASE("location and scale equivariance for every rule") {
  std::mt19937 rng(221);
  const StudySet s = random_studies({1.0, 1.5, 1.5, 2.5, 3.5}, rng);
  StudySet shifted = s;
  for (auto& st : shifted.studies) st.effect += 9.25;
  StudySet scaled = s;
  const double lam = 3.5;
  for (auto& st : scaled.studies) {
    st.effect *= lam;
    st.std_error *= lam;
  }
  const CanonicalForm cf = cf_of(s), cfs = cf_of(shifted), cfl = cf_of(scaled);
  for (const WeightRule& rule : kAllRules) {
    if (rule.kind == RuleKind::PluginFixed || rule.kind == RuleKind::Stein)
      continue;  // fixed tau2 / fixed spec are not scale-free parameters
    const double base = estimate_mu(cf, rule).value;
    CHECK(estimate_mu(cfs, rule).value ==
          doctest::Approx(base + 9.25).epsilon(1e-9));
    CHECK(estimate_mu(cfl, rule).value ==
          doctest::Approx(base * lam).epsilon(1e-9));
  }
}

TEST_CASE("rules are unbiased for mu (MC smoke)") {
  GenerativeConfig cfg;
  cfg.mu = -2.5;
  cfg.tau2 = 1.2;
  cfg.group_variances = {0.5, 1.0, 2.0};
  cfg.multiplicities = {2, 1, 2};
  cfg.seed = 31415;
  for (const char* name : {"dl", "delta1", "mean"}) {
    const WeightRule rule = WeightRule::parse(name);
    const int reps = 20000;
    double acc = 0.0, acc2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      const CanonicalForm cf = transform(group(simulate(cfg, 1000 + r)));
      const double v = estimate_mu(cf, rule).value;
      acc += v;
      acc2 += v * v;
    }
    const double mean = acc / reps;
    const double sd = std::sqrt((acc2 - reps * mean * mean) / (reps - 1.0));
    CHECK(std::abs(mean - cfg.mu) < 3.0 * sd / std::sqrt(double(reps)));
  }
}

TEST_CASE("bayes: point mass prior equals the fixed plug-in") {
  std::mt19937 rng(223);
  const StudySet s = random_studies({1.0, 1.7, 2.3, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  PriorSpec point;
  point.nodes = {{1.3, 1.0}};
  const auto wb = bayes_weights(cf, point);
  for (size_t j = 0; j < wb.size(); ++j)
    CHECK(wb[j] == doctest::Approx(1.0 / (1.3 + cf.t2[j])).epsilon(1e-13));
}

TEST_CASE("bayes: two-point prior gives a convex combination") {
  std::mt19937 rng(225);
  const StudySet s = random_studies({1.0, 1.9, 2.6}, rng);
  const CanonicalForm cf = cf_of(s);
  PriorSpec two;
  two.nodes = {{0.4, 0.25}, {3.0, 0.75}};
  const auto wb = bayes_weights(cf, two);
  const double l0 = std::log(0.25) - restricted_loglik(cf, 0.4);
  const double l1 = std::log(0.75) - restricted_loglik(cf, 3.0);
  const double p0 = 1.0 / (1.0 + std::exp(l1 - l0));
  for (size_t j = 0; j < wb.size(); ++j) {
    const double want = p0 / (0.4 + cf.t2[j]) + (1.0 - p0) / (3.0 + cf.t2[j]);
    CHECK(wb[j] == doctest::Approx(want).epsilon(1e-11));
  }
}

TEST_CASE("bayes weights decrease in each y_l^2 and order with t_j") {
  std::mt19937 rng(227);
  const StudySet s = random_studies({1.0, 1.6, 2.4, 3.3}, rng);
  CanonicalForm cf = cf_of(s);
  const PriorSpec prior = PriorSpec::log_grid(1e-4, 1e3, 120);
  // ordering: t_j^2 < t_l^2 implies w_j > w_l
  const auto w = bayes_weights(cf, prior);
  for (size_t j = 0; j + 1 < w.size(); ++j) CHECK(w[j] > w[j + 1]);
  // monotone decrease in y_l^2 (scan one coordinate)
  for (size_t l = 0; l < cf.y.size(); ++l) {
    double prev = std::numeric_limits<double>::infinity();
    for (double yl : {0.25, 0.8, 1.7, 3.0, 6.0}) {
      CanonicalForm probe = cf;
      probe.y[l] = yl;
      const double wj = bayes_weights(probe, prior)[0];
      CHECK(wj < prev + 1e-15);
      prev = wj;
    }
  }
}

TEST_CASE("bayes default grid is a proper prior") {
  const PriorSpec p = PriorSpec::default_grid(2.0);
  REQUIRE(p.nodes.size() == 401);
  double total = 0.0;
  for (auto& [t, w] : p.nodes) {
    CHECK(t >= 0.0);
    CHECK(w >= 0.0);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shrinkage rules refuse n <= 3") {
  std::mt19937 rng(229);
  const StudySet s = random_studies({1.0, 2.0, 3.0}, rng);
  const CanonicalForm cf = cf_of(s);
  for (const char* name : {"delta1", "delta0", "mh", "stein:alpha=1;q=1;r=1"})
    CHECK_THROWS_AS(estimate_mu(cf, WeightRule::parse(name)),
                    InvalidForSampleSize);
  // plug-in rules still work
  CHECK_NOTHROW(estimate_mu(cf, WeightRule::parse("dl")));
  CHECK_NOTHROW(estimate_mu(cf, WeightRule::parse("bayes:grid=0.01,10,30")));
}

TEST_CASE("p = 1 falls back to the sample mean with a flag") {
  StudySet s;
  s.studies = {Study{1.0, 2.0, std::nullopt}, Study{5.0, 2.0, std::nullopt}};
  const GroupedData g = group(s);
  REQUIRE(g.p == 1);
  const MuEstimate est = estimate_mu(g, WeightRule::parse("dl"));
  CHECK(est.p1_fallback);
  CHECK(est.value == doctest::Approx(3.0));
}

TEST_CASE("rule parse errors list the valid names") {
  CHECK_THROWS_AS(WeightRule::parse("nope"), ParseError);
  try {
    WeightRule::parse("nope");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("delta1") != std::string::npos);
  }
}
