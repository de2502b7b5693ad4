#pragma once

#include <stdexcept>
#include <string>

namespace vidsig {

// Error taxonomy shared across modules. The CLI maps each class onto a
// distinct exit code, so these types are part of the external contract.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KeyLengthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vidsig
