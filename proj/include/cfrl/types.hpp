#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cfrl {

using Vec = std::vector<double>;

/// Full simulator state. `observable` is what a policy sees; `internal` is
/// everything needed to restart the simulator exactly.
struct EnvState {
  Vec observable;
  Vec internal;

  bool operator==(const EnvState&) const = default;
};

/// Raised when a numerical training procedure diverges (NaN/inf losses or
/// gradients).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfrl
