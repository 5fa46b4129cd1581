#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace remeta::cli {

struct AnalyzeOptions {
  std::string input_path;
  std::vector<std::string> tau_methods;  // default: dl hedges mp reml
  std::vector<std::string> mu_methods;   // default: dl
};

struct CanonicalOptions {
  std::string input_path;
};

struct CurveOptions {
  std::string design;      // "s2=1,2,4;nu=1,1,2"
  std::string input_path;  // alternative: derive the design from a CSV
  std::string rule = "dl";
  std::string grid = "default";  // default | v1,v2,... | log:lo:hi:n | log0:lo:hi:n
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
};

struct Figure1Options {
  std::string out_prefix = "figure1_";
  double grid_max = 10.0;
  double grid_step = 0.1;
};

// Each command returns the text the CLI prints on stdout; curve/figure
// commands additionally write their CSV files.
std::string cmd_analyze(const AnalyzeOptions& opt);
std::string cmd_canonical(const CanonicalOptions& opt);
std::string cmd_risk_curve(const CurveOptions& opt);
std::string cmd_figure1(const Figure1Options& opt);

// Round-trip (shortest) decimal formatting used for all numeric output.
std::string fmt_double(double v);

}  // namespace remeta::cli
