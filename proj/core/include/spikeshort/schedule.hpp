#pragma once

#include <cstdint>

#include "spikeshort/network.hpp"

namespace spikeshort {

/// Balance-coefficient schedule. `i` counts completed lambda updates, so the
/// first training step runs with lambda(1) and the last with lambda(I) = 0.
struct ScheduleState {
  real lambda0 = 0.25;
  std::int64_t i = 0;
  std::int64_t total = 0;  // I = epochs * batches per epoch
  TrainingMode mode = TrainingMode::evolutionary;
};

/// evolutionary: lambda0 * (1 - i / I); shortcut: lambda0; uniform-sum: 1;
/// vanilla: 0.
real lambda_at(const ScheduleState& s);

/// lr0 * (1 + cos(pi * i / I)) / 2.
real cosine_lr(std::int64_t i, std::int64_t total, real lr0);

}  // namespace spikeshort
