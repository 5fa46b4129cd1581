#include <doctest.h>

#include <cmath>
#include <sstream>

#include "remeta/core_model.hpp"
#include "remeta/errors.hpp"

using namespace remeta;

namespace {

StudySet make_set(std::initializer_list<std::pair<double, double>> rows) {
  StudySet s;
  for (auto [x, se] : rows) s.studies.push_back(Study{x, se, std::nullopt});
  return s;
}

}  // namespace

TEST_CASE("grouping: all distinct variances") {
  const GroupedData g = group(make_set({{1.0, 1.0}, {3.0, 2.0}}));
  CHECK(g.p == 2);
  CHECK(g.nu == std::vector<int>{1, 1});
  CHECK(g.mean == std::vector<double>{1.0, 3.0});
  CHECK(g.u2 == std::vector<double>{0.0, 0.0});
}

TEST_CASE("grouping: tied variances get pooled with sample variance") {
  const GroupedData g = group(make_set({{1.0, 1.0}, {3.0, 1.0}}));
  CHECK(g.p == 1);
  CHECK(g.nu == std::vector<int>{2});
  CHECK(g.mean[0] == doctest::Approx(2.0));
  CHECK(g.u2[0] == doctest::Approx(2.0));  // ((1-2)^2 + (3-2)^2)/1
}

TEST_CASE("grouping: mixed") {
  const GroupedData g = group(make_set({{0.0, 1.0}, {2.0, 1.0}, {5.0, 2.0}}));
  CHECK(g.p == 2);
  CHECK(g.nu == std::vector<int>{2, 1});
  CHECK(g.mean[0] == doctest::Approx(1.0));
  CHECK(g.mean[1] == doctest::Approx(5.0));
  CHECK(g.u2[0] == doctest::Approx(2.0));
  CHECK(g.u2[1] == 0.0);
  CHECK(g.grand_mean() == doctest::Approx((0.0 + 2.0 + 5.0) / 3.0));
}

TEST_CASE("grouping rejects fewer than two studies") {
  CHECK_THROWS_AS(group(make_set({{1.0, 1.0}})), InvalidInput);
}

TEST_CASE("grouping is idempotent") {
  const GroupedData g =
      group(make_set({{0.1, 1.0}, {2.0, 1.0}, {5.0, 2.0}, {1.0, 3.0}}));
  // reconstitute a study set from the grouped output: means become
  // effects, u2 is lost (multiplicity 1 per group) - compare designs
  StudySet round;
  for (int i = 0; i < g.p; ++i)
    round.studies.push_back(Study{g.mean[i], std::sqrt(g.s2[i]), std::nullopt});
  const GroupedData g2 = group(round);
  CHECK(g2.p == g.p);
  for (int i = 0; i < g.p; ++i) {
    CHECK(g2.s2[i] == doctest::Approx(g.s2[i]).epsilon(1e-15));
    CHECK(g2.mean[i] == doctest::Approx(g.mean[i]).epsilon(1e-15));
  }
}

TEST_CASE("forced group ids override the tolerance") {
  // the two variances differ by far less than the 1e-9 tolerance, so
  // they would merge without the labels
  StudySet s;
  s.studies.push_back(Study{1.0, 1.0, "a"});
  s.studies.push_back(Study{2.0, 1.0000000001, "b"});
  s.studies.push_back(Study{4.0, 1.0000000001, "b"});
  CHECK(group(StudySet{{Study{1.0, 1.0, std::nullopt},
                        Study{2.0, 1.0000000001, std::nullopt},
                        Study{4.0, 1.0000000001, std::nullopt}},
                       1e-9})
            .p == 1);
  const GroupedData g = group(s);
  CHECK(g.p == 2);
  CHECK(g.nu == std::vector<int>{1, 2});
  CHECK(g.u2[1] == doctest::Approx(2.0));
}

TEST_CASE("simulate is deterministic and mean-centred") {
  GenerativeConfig cfg;
  cfg.mu = 3.0;
  cfg.tau2 = 0.0;
  cfg.group_variances = {1e-30};
  cfg.multiplicities = {4};
  cfg.seed = 5;
  const StudySet a = simulate(cfg);
  const StudySet b = simulate(cfg);
  REQUIRE(a.n() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.studies[i].effect == b.studies[i].effect);
    CHECK(a.studies[i].effect == doctest::Approx(3.0).epsilon(1e-10));
  }
}

TEST_CASE("simulate variance matches tau2 + s2") {
  GenerativeConfig cfg;
  cfg.mu = 0.0;
  cfg.tau2 = 1.0;
  cfg.group_variances = {1.0};
  cfg.multiplicities = {1};
  cfg.seed = 11;
  const int reps = 100000;
  double m1 = 0.0, m2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const double x = simulate(cfg, r).studies[0].effect;
    m1 += x;
    m2 += x * x;
  }
  m1 /= reps;
  m2 /= reps;
  const double var = m2 - m1 * m1;
  // Var = 2.0, SE(sample var) ~ sqrt(2) * 2 / sqrt(reps)
  CHECK(std::abs(var - 2.0) < 3.0 * std::sqrt(2.0) * 2.0 / std::sqrt(reps));
}

TEST_CASE("csv ingestion") {
  std::istringstream in(
      "effect,std_error\n"
      "1.5,0.5\n"
      "2.5,1.25\n");
  const StudySet s = read_csv(in);
  REQUIRE(s.n() == 2);
  CHECK(s.studies[0].effect == 1.5);
  CHECK(s.studies[1].std_error == 1.25);
}

TEST_CASE("csv ingestion with group ids") {
  std::istringstream in(
      "effect,std_error,group_id\n"
      "1,1,a\n"
      "2,1,a\n"
      "9,2,b\n");
  const StudySet s = read_csv(in);
  REQUIRE(s.n() == 3);
  const GroupedData g = group(s);
  CHECK(g.p == 2);
  CHECK(g.nu == std::vector<int>{2, 1});
}

TEST_CASE("csv errors carry line numbers") {
  std::istringstream bad_header("effect;std_error\n1,1\n");
  CHECK_THROWS_AS(read_csv(bad_header), ParseError);
  std::istringstream bad_field(
      "effect,std_error\n"
      "1.0,1.0\n"
      "x,1.0\n");
  try {
    read_csv(bad_field);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
  std::istringstream bad_se("effect,std_error\n1.0,0\n");
  CHECK_THROWS_AS(read_csv(bad_se), ParseError);
}
