#pragma once

#include <stdexcept>
#include <string>

namespace mbnn {

// Shapes, ranges or arguments that violate an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite value appeared during evaluation. `layer` is the index of the
// affine map that produced it (0-based), or -1 when not layer-specific.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int layer = -1)
      : std::runtime_error(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File ingestion failures (missing file, unparseable cell, NaN).
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mbnn
