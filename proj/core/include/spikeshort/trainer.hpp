#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikeshort/data.hpp"
#include "spikeshort/network.hpp"
#include "spikeshort/optimizer.hpp"
#include "spikeshort/schedule.hpp"

namespace spikeshort {

struct TrainerConfig {
  real lr = 0.01;
  real weight_decay = 0.02;
  std::size_t batch = 64;
  std::size_t epochs = 30;
  OptimizerKind optimizer = OptimizerKind::adamw;
  std::uint64_t seed = 0;
  TrainingMode mode = TrainingMode::vanilla;
  real lambda0 = 0.25;
  /// L = CE(b_n) + lambda * sum CE(b_l) instead of CE on the combined output.
  bool per_branch_loss = false;
  std::size_t eval_batch = 256;
  /// Replaces the scheduled lambda; used to cross-check modes.
  std::optional<real> forced_lambda;

  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

struct MetricsRecord {
  std::int64_t iteration = 0;
  std::size_t epoch = 0;
  real train_loss = 0.0;
  real lambda = 0.0;
  real lr = 0.0;
  std::vector<real> branch_losses;  // CE of each b_l, main last
  std::optional<real> eval_accuracy;
  std::vector<real> layer_grad_norms;  // l2 per parameter, named_parameters() order
};

class Trainer {
 public:
  Trainer(Network& net, TrainerConfig config, std::int64_t total_iterations);

  /// forward -> lambda update -> combine -> loss -> backward -> optimizer.
  MetricsRecord train_step(const Tensor& images, std::span<const int> labels, std::size_t epoch = 0);

  const ScheduleState& schedule() const { return schedule_; }
  const TrainerConfig& config() const { return config_; }

 private:
  Network& net_;
  TrainerConfig config_;
  ScheduleState schedule_;
  Optimizer optimizer_;
};

/// Mean argmax accuracy of forward_infer over the dataset.
real evaluate(const Network& net, const Dataset& d, std::size_t batch = 256,
              std::optional<std::size_t> timesteps = std::nullopt);

/// Append-only metrics CSV: iteration,epoch,loss,lambda,lr,acc then one
/// branch_loss_l<l> column per branch. Numbers use 17 significant digits.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, std::size_t branches);
  void write(const MetricsRecord& record);

  static std::string header(std::size_t branches);
  static std::string row(const MetricsRecord& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t branches_;
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  real best_accuracy = 0.0;
  std::size_t best_epoch = 0;
  real final_accuracy = 0.0;
  real final_lambda = 0.0;
};

/// Runs epochs x batches steps, evaluating after every epoch. With a run
/// directory, writes metrics.csv plus checkpoint_best.ckpt (ties keep the
/// earlier epoch) and checkpoint_final.ckpt.
TrainResult train_loop(Network& net, const Dataset& train, const Dataset& test, const TrainerConfig& config,
                       const std::optional<std::filesystem::path>& run_dir = std::nullopt);

std::string format_real(real v);

}  // namespace spikeshort
