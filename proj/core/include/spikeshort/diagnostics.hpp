#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikeshort/network.hpp"

namespace spikeshort {

struct Histogram {
  std::vector<real> edges;  // bins + 1 edges over [-range, +range]
  std::vector<std::size_t> counts;

  bool operator==(const Histogram&) const = default;
};

/// Uniform bins over [-range, range], half-open [lo, hi) except the last;
/// values outside the range land in the end bins. `range` defaults to
/// max |g| (1 when every value is zero).
Histogram histogram(std::span<const real> values, std::size_t bins, std::optional<real> range = std::nullopt);

inline constexpr std::size_t kDefaultHistogramBins = 101;
inline constexpr real kNearZeroRelative = 1e-6;

struct GradientStats {
  std::string name;  // layer name, e.g. "block3.conv1"
  std::size_t count = 0;
  real l2 = 0.0;
  real mean_abs = 0.0;
  real near_zero_frac = 0.0;  // |g| < 1e-6 * max |g| (1 when all zero)
  Histogram hist;

  bool operator==(const GradientStats&) const = default;
};

GradientStats gradient_stats(const std::string& name, std::span<const real> grads,
                             std::size_t bins = kDefaultHistogramBins);

struct VanishingReport {
  std::string mode;
  real lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<GradientStats> layers;
  std::string first_layer;
  std::string last_layer;
  /// l2(first main-path conv) / l2(last main-path conv); 1 when they are the
  /// same layer, 0 when both are zero.
  real ratio_first_last = 0.0;

  const GradientStats* layer(const std::string& name) const;
  bool operator==(const VanishingReport&) const = default;
};

/// Marks that a forward and backward pass completed, so captured gradients
/// are meaningful.
struct PassContext {
  bool backward_done = false;
  real lambda = 0.0;
  real loss = 0.0;
};

/// One train-mode forward and backward on a batch, without an optimizer
/// step. Gradients are zeroed first.
PassContext gradient_pass(Network& net, const Tensor& images, std::span<const int> labels, real lambda);

/// Reads every parameterized layer's gradient. Layers are grouped by name
/// prefix ("block1.conv1", "block1.bn1", "head.l8", ...). Does not modify
/// the gradients; throws a state error unless ctx.backward_done.
VanishingReport capture_gradients(const Network& net, const PassContext& ctx, std::string mode, std::uint64_t seed,
                                  std::size_t bins = kDefaultHistogramBins);

/// Stable field order; numbers round-trip at 17 significant digits.
std::string report_to_json(const VanishingReport& report);
VanishingReport report_from_json(const std::string& text);
std::string report_to_csv(const VanishingReport& report);

enum class ReportFormat { csv, json };
void export_report(const VanishingReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace spikeshort
