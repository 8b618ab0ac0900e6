#ifndef MIXHOM_ERRORS_HPP
#define MIXHOM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mixhom {

// Base class for all library errors.  Subclasses map onto distinct process
// exit codes so scripted callers can tell configuration mistakes from bad
// data from numerical breakdowns.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable configuration: unknown kernel name, invalid flag combination,
// malformed experiment spec.  Exit code 1.
class config_error : public error {
 public:
  using error::error;
};

// Input that could not be read: non-numeric CSV cell, missing column,
// malformed JSON.  Exit code 2.
class parse_error : public error {
 public:
  using error::error;
};

// Mathematically inadmissible values: sigma <= 0, alpha outside (0,1),
// constant data, nonpositive value under a log transform.  Exit code 3.
class domain_error : public error {
 public:
  using error::error;
};

// Algorithmic failure: optimizer non-convergence, quadrature breakdown,
// non-PSD matrix where one is required.  Exit code 4.
class numerical_error : public error {
 public:
  using error::error;
};

// Exit code for a caught exception (see class comments above); unknown
// exception types map to the numerical-error code.
int exit_code_for(const std::exception& e);

}  // namespace mixhom

#endif  // MIXHOM_ERRORS_HPP
