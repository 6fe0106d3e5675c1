#pragma once

#include <stdexcept>
#include <string>

namespace bnlab {

// Error taxonomy. The C API maps these onto status codes and the CLI maps
// them onto exit codes (usage/config -> 2, divergence -> 3).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or operator shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid architecture or run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// API misuse: backward off-tape, label out of range, eval without statistics.
struct UsageError : Error {
  using Error::Error;
};

// Malformed file contents (dataset batches, checkpoints, CSV inputs).
struct FormatError : Error {
  using Error::Error;
};

// Filesystem failures, reported with path context.
struct IoError : Error {
  using Error::Error;
};

// Non-finite training loss; carries the position where it was detected.
struct DivergenceError : Error {
  DivergenceError(const std::string& msg, int epoch_, long iteration_)
      : Error(msg), epoch(epoch_), iteration(iteration_) {}
  int epoch;
  long iteration;
};

}  // namespace bnlab
