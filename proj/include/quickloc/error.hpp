#pragma once

#include <stdexcept>
#include <string>

namespace quickloc {

// Tensor/layer geometry that does not line up.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Out-of-domain values, bad flags, inconsistent requests.
struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input files; message carries the row number where known.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training hit a non-finite loss.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace quickloc
