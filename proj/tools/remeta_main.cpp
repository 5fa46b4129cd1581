#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "../src/cli/commands.hpp"
#include "remeta/errors.hpp"

namespace {

std::uint64_t default_samples() {
  if (const char* env = std::getenv("REMETA_SAMPLES")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
    std::cerr << "warning: ignoring malformed REMETA_SAMPLES='" << env
              << "'\n";
  }
  return 1'000'000;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw remeta::InvalidInput("cannot write '" + out_path + "'");
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "remeta - random-effects meta-analysis estimators and R-risk engine"};
  app.require_subcommand(1);

  remeta::cli::AnalyzeOptions an;
  std::string an_out;
  auto* analyze = app.add_subcommand(
      "analyze", "estimate tau^2 and mu from a CSV of studies");
  analyze->add_option("--input", an.input_path, "CSV: effect,std_error[,group_id]")
      ->required();
  analyze->add_option("--tau-method", an.tau_methods,
                      "dl | hedges | mp | reml | moment:q=..;r=..");
  analyze->add_option("--mu-method", an.mu_methods,
                      "mean | gd | dl | hedges | mp | reml | delta1 | delta0 "
                      "| mh | oracle:<t> | stein:... | bayes[:grid=..]");
  analyze->add_option("--out", an_out, "write the JSON report here");

  remeta::cli::CanonicalOptions ca;
  std::string ca_out;
  auto* canonical = app.add_subcommand(
      "canonical", "dump t^2, A, b, y and identity residuals as JSON");
  canonical->add_option("--input", ca.input_path, "CSV input")->required();
  canonical->add_option("--out", ca_out, "write the JSON here");

  remeta::cli::CurveOptions cu;
  cu.samples = default_samples();
  auto* curve = app.add_subcommand("risk-curve",
                                   "Monte Carlo / closed-form R-risk curve");
  curve->add_option("--design", cu.design, "inline design: s2=1,2;nu=1,2");
  curve->add_option("--input", cu.input_path, "CSV whose design to use");
  curve->add_option("--rule", cu.rule, "weight rule (see analyze --mu-method)");
  curve->add_option("--grid", cu.grid,
                    "default | v1,v2,.. | log:lo:hi:n | log0:lo:hi:n");
  curve->add_option("--samples", cu.samples, "MC samples per grid point");
  curve->add_option("--seed", cu.seed, "RNG seed")->required();
  curve->add_option("--threads", cu.threads, "worker threads");
  curve->add_option("--out", cu.out, "output CSV path")->required();

  remeta::cli::Figure1Options f1;
  auto* figure1 = app.add_subcommand(
      "figure1", "equal-uncertainty curves for n=5 and n=15 (s^2=1)");
  figure1->add_option("--out-prefix", f1.out_prefix, "CSV filename prefix");
  figure1->add_option("--grid-max", f1.grid_max, "largest tau^2");
  figure1->add_option("--grid-step", f1.grid_step, "tau^2 step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) emit(remeta::cli::cmd_analyze(an), an_out);
    if (*canonical) emit(remeta::cli::cmd_canonical(ca), ca_out);
    if (*curve) std::cout << remeta::cli::cmd_risk_curve(cu);
    if (*figure1) std::cout << remeta::cli::cmd_figure1(f1);
  } catch (const remeta::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
