#include "remeta/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "remeta/errors.hpp"
#include "remeta/rng.hpp"

namespace remeta {

double GroupedData::grand_mean() const {
  double acc = 0.0;
  for (int i = 0; i < p; ++i) acc += nu[i] * mean[i];
  return acc / n;
}

double GroupedData::s2_bar() const {
  double acc = 0.0;
  for (int i = 0; i < p; ++i) acc += nu[i] * s2[i];
  return acc / n;
}

namespace {

void validate_study(const Study& st, int index) {
  if (!std::isfinite(st.effect))
    throw InvalidInput("study " + std::to_string(index) +
                       ": effect must be finite");
  if (!(st.std_error > 0.0) || !std::isfinite(st.std_error))
    throw InvalidInput("study " + std::to_string(index) +
                       ": std_error must be a positive finite number");
}

GroupedData finalize_groups(std::vector<std::vector<const Study*>> groups,
                            int n) {
  GroupedData g;
  g.n = n;
  g.p = static_cast<int>(groups.size());
  // order groups by their mean s^2
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) {
              auto mean_s2 = [](const auto& v) {
                double acc = 0.0;
                for (const Study* s : v) acc += s->std_error * s->std_error;
                return acc / static_cast<double>(v.size());
              };
              return mean_s2(a) < mean_s2(b);
            });
  for (const auto& members : groups) {
    const int m = static_cast<int>(members.size());
    double s2 = 0.0, xbar = 0.0;
    for (const Study* s : members) {
      s2 += s->std_error * s->std_error;
      xbar += s->effect;
    }
    s2 /= m;
    xbar /= m;
    double u2 = 0.0;
    if (m > 1) {
      for (const Study* s : members) {
        const double d = s->effect - xbar;
        u2 += d * d;
      }
      u2 /= (m - 1);
    }
    g.s2.push_back(s2);
    g.nu.push_back(m);
    g.mean.push_back(xbar);
    g.u2.push_back(u2);
  }
  for (int i = 0; i + 1 < g.p; ++i)
    if (!(g.s2[i] < g.s2[i + 1]))
      throw InvalidInput("grouping produced non-distinct group variances");
  return g;
}

}  // namespace

GroupedData group(const StudySet& set) {
  if (set.n() < 2) throw InvalidInput("need at least 2 studies");
  for (int i = 0; i < set.n(); ++i) validate_study(set.studies[i], i);

  const bool any_forced =
      std::any_of(set.studies.begin(), set.studies.end(),
                  [](const Study& s) { return s.group_id.has_value(); });
  std::vector<std::vector<const Study*>> groups;
  if (any_forced) {
    for (const Study& s : set.studies)
      if (!s.group_id)
        throw InvalidInput(
            "group_id must be present on every study or on none");
    std::map<std::string, std::vector<const Study*>> by_id;
    for (const Study& s : set.studies) by_id[*s.group_id].push_back(&s);
    for (auto& [id, members] : by_id) groups.push_back(std::move(members));
  } else {
    std::vector<const Study*> order;
    for (const Study& s : set.studies) order.push_back(&s);
    std::stable_sort(order.begin(), order.end(),
                     [](const Study* a, const Study* b) {
                       return a->std_error < b->std_error;
                     });
    const double tol = set.grouping_tolerance;
    double anchor = -1.0;
    for (const Study* s : order) {
      const double s2 = s->std_error * s->std_error;
      if (groups.empty() || s2 - anchor > tol * std::max(s2, anchor)) {
        groups.emplace_back();
        anchor = s2;
      }
      groups.back().push_back(s);
    }
  }
  return finalize_groups(std::move(groups), set.n());
}

StudySet simulate(const GenerativeConfig& config,
                  std::uint64_t stream_offset) {
  if (config.tau2 < 0.0) throw InvalidInput("tau2 must be >= 0");
  if (config.group_variances.empty() ||
      config.group_variances.size() != config.multiplicities.size())
    throw InvalidInput("design: group_variances and multiplicities must be "
                       "non-empty and equally sized");
  for (double s2 : config.group_variances)
    if (!(s2 > 0.0)) throw InvalidInput("design: s^2 must be positive");
  for (int nu : config.multiplicities)
    if (nu < 1) throw InvalidInput("design: multiplicities must be >= 1");

  const double tau = std::sqrt(config.tau2);
  RngStream rng(config.seed, streams::kSimulate + stream_offset);
  StudySet out;
  for (std::size_t i = 0; i < config.group_variances.size(); ++i) {
    const double s = std::sqrt(config.group_variances[i]);
    for (int k = 0; k < config.multiplicities[i]; ++k) {
      const double b = tau * rng.normal();
      const double eps = s * rng.normal();
      out.studies.push_back(Study{config.mu + b + eps, s, std::nullopt});
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim spaces
    size_t b = field.find_first_not_of(" \t\r");
    size_t e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string()
                                         : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& s, const char* what, int line_no) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("cannot parse ") + what + " '" + s + "'",
                     line_no);
  }
}

}  // namespace

StudySet read_csv(std::istream& in) {
  StudySet set;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  bool has_group = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    auto fields = split_csv_line(line);
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "effect" ||
          fields[1] != "std_error")
        throw ParseError("expected header 'effect,std_error[,group_id]'",
                         line_no);
      if (fields.size() == 3 && fields[2] == "group_id")
        has_group = true;
      else if (fields.size() > 2)
        throw ParseError("unexpected extra header columns", line_no);
      header_seen = true;
      continue;
    }
    const size_t want = has_group ? 3 : 2;
    if (fields.size() != want)
      throw ParseError("expected " + std::to_string(want) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    Study st;
    st.effect = parse_number(fields[0], "effect", line_no);
    st.std_error = parse_number(fields[1], "std_error", line_no);
    if (!(st.std_error > 0.0))
      throw ParseError("std_error must be positive", line_no);
    if (has_group) st.group_id = fields[2];
    set.studies.push_back(std::move(st));
  }
  if (!header_seen) throw ParseError("empty input", 0);
  return set;
}

StudySet read_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path + "'");
  return read_csv(f);
}

}  // namespace remeta
