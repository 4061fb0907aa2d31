#pragma once

#include <stdexcept>
#include <string>

namespace ssvep {

// Error taxonomy shared by all modules. The CLI maps each family to a
// distinct process exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corrupt archives, leakage between train/test pools, malformed inputs.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-convergence, singular matrices, NaN/Inf escapes.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

}  // namespace ssvep
