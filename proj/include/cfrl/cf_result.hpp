#pragma once

#include <cstddef>
#include <vector>

#include "cfrl/trajectory.hpp"

namespace cfrl {

/// A generated counterfactual annotated against its observed trajectory.
struct CfResult {
  Trajectory counterfactual;
  double distance = 0.0;
  double return_cf = 0.0;
  double return_observed = 0.0;
  bool positive = false;
  /// Inner-step indices played by the constrained policy.
  std::vector<std::size_t> forced_steps;
  bool truncated = false;
  /// The observed start state was itself constrained.
  bool initial_constrained = false;

  bool is_positive() const noexcept { return return_cf > return_observed; }
};

}  // namespace cfrl
