#pragma once

#include <stdexcept>
#include <string>

namespace miqa {

/// Bad user input: malformed config keys or values, unreadable or corrupt
/// files, contract violations at the CLI boundary. Maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown at run time (non-finite loss). Maps to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace miqa
