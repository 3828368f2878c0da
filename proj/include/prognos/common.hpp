#pragma once

#include <stdexcept>
#include <string>

namespace prognos {

// Error categories map to process exit codes in the CLI:
// validation 2, numerical 3, missing artifact 4.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One observed (time, event) pair. `event` false means right-censored.
struct TimeEvent {
  double time = 0.0;
  bool event = false;
};

}  // namespace prognos
