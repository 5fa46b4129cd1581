#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace remeta {

// One study: reported effect x_i and its standard error s_i (treated as
// a known constant).
struct Study {
  double effect = 0.0;
  double std_error = 1.0;
  // Optional forced group label from CSV ingestion; studies sharing a
  // label are grouped regardless of the variance tolerance.
  std::optional<std::string> group_id;
};

struct StudySet {
  std::vector<Study> studies;
  // Relative tolerance on s^2 for declaring two variances equal.
  double grouping_tolerance = 1e-9;

  int n() const { return static_cast<int>(studies.size()); }
};

// Sufficient statistics after grouping by distinct reported variance.
// Groups are sorted by ascending s^2; u2 is the unbiased within-group
// sample variance, 0 whenever the multiplicity is 1.
struct GroupedData {
  int n = 0;
  int p = 0;
  std::vector<double> s2;    // ascending, strictly increasing
  std::vector<int> nu;       // multiplicities, sum = n
  std::vector<double> mean;  // group means of the effects
  std::vector<double> u2;    // within-group variances

  double grand_mean() const;  // sum nu_i mean_i / n
  double s2_bar() const;      // sum nu_i s2_i / n
};

struct GenerativeConfig {
  double mu = 0.0;
  double tau2 = 0.0;
  std::vector<double> group_variances;  // s_i^2
  std::vector<int> multiplicities;      // nu_i
  std::uint64_t seed = 1;
};

// Groups a study set into distinct-variance classes.  Throws
// InvalidInput for fewer than 2 studies.
GroupedData group(const StudySet& set);

// Draws x_i = mu + b_i + eps_i per study; deterministic in
// (config.seed, stream_offset).  The offset exists so replication loops
// can derive independent sets from one seed.
StudySet simulate(const GenerativeConfig& config,
                  std::uint64_t stream_offset = 0);

// CSV ingestion: header "effect,std_error[,group_id]", '.' decimal.
StudySet read_csv(std::istream& in);
StudySet read_csv_file(const std::string& path);

}  // namespace remeta
