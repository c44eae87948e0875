#pragma once

#include <stdexcept>
#include <string>

namespace esiw {

inline constexpr const char* kToolName = "esiw";
inline constexpr const char* kToolVersion = "0.1.0";

// Error taxonomy mapped to stable CLI exit codes:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File/format/dimension problems in data the tool consumes or produces.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures: singular systems, divergence, degenerate inputs.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace esiw
