#pragma once

#include <stdexcept>
#include <string>

namespace oadn {

// Malformed files, inconsistent shapes, missing inputs. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Divergence, non-finite values produced by a solver. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace oadn
