#pragma once

#include <stdexcept>
#include <string>

namespace biphoton {

/// Base class of every error thrown by the toolkit.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or parameter (CLI exit code 2).
class config_error : public error {
public:
  using error::error;
};

/// Numeric grid too coarse for the requested spectrum.
class resolution_error : public config_error {
public:
  using config_error::config_error;
};

/// Malformed or inconsistent data: unsorted tag streams, negative rates,
/// corrupt files (CLI exit code 3).
class data_error : public error {
public:
  using error::error;
};

/// Input outside the mathematical domain of an operation.
class input_domain_error : public error {
public:
  using error::error;
};

/// Structurally incomplete model, e.g. a detector with no partner positions.
class model_error : public error {
public:
  using error::error;
};

/// Singular or unidentifiable least-squares problem (CLI exit code 3).
class degenerate_fit_error : public error {
public:
  using error::error;
};

}  // namespace biphoton
