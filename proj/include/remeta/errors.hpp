#pragma once

#include <stdexcept>
#include <string>

namespace remeta {

// Error taxonomy shared by the whole library.  Everything derives from
// Error so callers can catch one type at the CLI boundary.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied data (too few studies, malformed fields, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Structurally valid input the operation cannot serve (e.g. p = 1 sets
// for canonical operations).
class UnsupportedInput : public Error {
 public:
  using Error::Error;
};

// A numeric routine left its validity envelope (lost bracket,
// ill-conditioned root, underflowed posterior mass, ...).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// Iterative solver exhausted its iteration budget; carries the last
// iterate so callers can inspect or restart.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& msg, double last, int iters)
      : Error(msg), last_iterate(last), iterations(iters) {}
  double last_iterate;
  int iterations;
};

// Estimator requires a larger number of studies (shrinkage rules need
// n > 3).
class InvalidForSampleSize : public Error {
 public:
  using Error::Error;
};

// CSV / option syntax errors; line is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line_no = 0)
      : Error(line_no > 0 ? msg + " (line " + std::to_string(line_no) + ")"
                          : msg),
        line(line_no) {}
  int line;
};

}  // namespace remeta
