#ifndef ALEVAR_ERRORS_HPP
#define ALEVAR_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace alevar {

struct InvalidSizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularDesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularDowndateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateResponseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Carries the last Newton iterate so callers can inspect how far the fit got.
struct NonConvergenceError : std::runtime_error {
  NonConvergenceError(const std::string& msg, std::vector<double> last, int iters)
      : std::runtime_error(msg), last_iterate(std::move(last)), iterations(iters) {}
  std::vector<double> last_iterate;
  int iterations;
};

struct PositivityError : std::runtime_error {
  PositivityError(const std::string& msg, std::vector<std::size_t> rows)
      : std::runtime_error(msg), offending_rows(std::move(rows)) {}
  std::vector<std::size_t> offending_rows;
};

struct JackknifeRefitError : std::runtime_error {
  JackknifeRefitError(const std::string& msg, std::vector<std::size_t> idx)
      : std::runtime_error(msg), failed_indices(std::move(idx)) {}
  std::vector<std::size_t> failed_indices;
};

struct BootstrapDegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateDistributionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StudyAbortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace alevar

#endif
