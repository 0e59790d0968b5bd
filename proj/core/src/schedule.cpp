#include "spikeshort/schedule.hpp"

#include <cmath>
#include <numbers>

#include "spikeshort/errors.hpp"

namespace spikeshort {

real lambda_at(const ScheduleState& s) {
  if (s.total <= 0) fail(ErrorKind::configuration, "schedule needs a positive iteration count I");
  if (s.i < 0 || s.i > s.total) {
    fail(ErrorKind::input, "schedule iteration " + std::to_string(s.i) + " outside [0, " + std::to_string(s.total) + "]");
  }
  switch (s.mode) {
    case TrainingMode::vanilla: return 0.0;
    case TrainingMode::shortcut: return s.lambda0;
    case TrainingMode::uniform_sum: return 1.0;
    case TrainingMode::evolutionary:
      return s.lambda0 * static_cast<real>(s.total - s.i) / static_cast<real>(s.total);
  }
  return 0.0;
}

real cosine_lr(std::int64_t i, std::int64_t total, real lr0) {
  if (total <= 0) fail(ErrorKind::configuration, "cosine schedule needs a positive iteration count");
  if (i < 0 || i > total) {
    fail(ErrorKind::input, "cosine schedule step " + std::to_string(i) + " outside [0, " + std::to_string(total) + "]");
  }
  if (i == total) return 0.0;
  const real progress = static_cast<real>(i) / static_cast<real>(total);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace spikeshort
