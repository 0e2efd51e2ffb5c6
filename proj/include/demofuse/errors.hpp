#pragma once

#include <stdexcept>
#include <string>

namespace demofuse {

/// Bad input data or configuration (maps to CLI exit code 1).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem-level failure: missing, unreadable or unwritable path
/// (maps to CLI exit code 2).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace demofuse
