#include "spikeshort/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "spikeshort/checkpoint.hpp"
#include "spikeshort/errors.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

std::string format_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void TrainerConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorKind::configuration, "trainer lr must be positive");
  if (epochs < 1) fail(ErrorKind::configuration, "trainer epochs must be >= 1");
  if (batch < 1) fail(ErrorKind::configuration, "trainer batch must be >= 1");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::configuration, "trainer weight_decay must be >= 0");
  if (!(lambda0 >= 0.0)) fail(ErrorKind::configuration, "trainer lambda0 must be >= 0");
  if (eval_batch < 1) fail(ErrorKind::configuration, "trainer eval_batch must be >= 1");
}

Trainer::Trainer(Network& net, TrainerConfig config, std::int64_t total_iterations)
    : net_(net),
      config_(config),
      schedule_{config.lambda0, 0, total_iterations, config.mode},
      optimizer_(OptimizerConfig{config.optimizer, config.weight_decay}) {
  if (total_iterations <= 0) fail(ErrorKind::configuration, "total iteration count must be positive");
}

MetricsRecord Trainer::train_step(const Tensor& images, std::span<const int> labels, std::size_t epoch) {
  if (schedule_.i >= schedule_.total) {
    fail(ErrorKind::state, "training already ran all " + std::to_string(schedule_.total) + " iterations");
  }
  net_.set_norm_mode(NormMode::train);
  net_.zero_grad();

  MetricsRecord record;
  record.epoch = epoch;
  Tape tape;
  {
    TapeScope scope(&tape);
    ForwardTrace trace = net_.forward_train(images);

    ++schedule_.i;
    const real lambda = config_.forced_lambda.value_or(lambda_at(schedule_));

    Tensor loss;
    if (config_.per_branch_loss) {
      loss = softmax_cross_entropy(trace.main(), labels);
      for (std::size_t l = 0; l + 1 < trace.b.size(); ++l) {
        loss = add(loss, scale(softmax_cross_entropy(trace.b[l], labels), lambda));
      }
    } else {
      loss = softmax_cross_entropy(combine_outputs(trace, lambda), labels);
    }
    record.iteration = schedule_.i;
    record.lambda = lambda;
    record.train_loss = loss.item();
    if (!std::isfinite(record.train_loss)) {
      fail(ErrorKind::numeric, "non-finite loss at iteration " + std::to_string(schedule_.i));
    }
    for (const auto& b : trace.b) {
      real total = 0.0;
      for (real v : cross_entropy_values(b, labels)) total += v;
      record.branch_losses.push_back(total / static_cast<real>(labels.size()));
    }
    tape.backward(loss);
  }

  const auto params = net_.named_parameters();
  for (const auto& p : params) {
    real sq = 0.0;
    for (real g : p.tensor.grad()) sq += g * g;
    record.layer_grad_norms.push_back(std::sqrt(sq));
  }
  record.lr = cosine_lr(schedule_.i - 1, schedule_.total, config_.lr);
  optimizer_.step(params, record.lr);
  return record;
}

real evaluate(const Network& net, const Dataset& d, std::size_t batch, std::optional<std::size_t> timesteps) {
  if (d.size() == 0) fail(ErrorKind::input, "evaluate on an empty dataset");
  if (batch < 1) fail(ErrorKind::input, "evaluation batch must be >= 1");
  const std::size_t steps = timesteps.value_or(net.spec().timesteps);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < d.size(); first += batch) {
    idx.clear();
    for (std::size_t i = first; i < std::min(d.size(), first + batch); ++i) idx.push_back(i);
    Batch b = gather(d, idx);
    Tensor logits = net.forward_infer(b.images, steps);
    const std::size_t classes = logits.dim(1);
    auto lv = logits.values();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const real* row = lv.data() + i * classes;
      const auto arg = static_cast<int>(std::max_element(row, row + classes) - row);
      if (arg == b.labels[i]) ++correct;
    }
  }
  return static_cast<real>(correct) / static_cast<real>(d.size());
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::size_t branches)
    : path_(path), out_(path, std::ios::trunc), branches_(branches) {
  if (!out_) fail(ErrorKind::io, "cannot open metrics file '" + path.string() + "'");
  out_ << header(branches) << '\n';
  out_.flush();
}

std::string MetricsWriter::header(std::size_t branches) {
  std::string h = "iteration,epoch,loss,lambda,lr,acc";
  for (std::size_t l = 1; l <= branches; ++l) h += ",branch_loss_l" + std::to_string(l);
  return h;
}

std::string MetricsWriter::row(const MetricsRecord& r) {
  std::string line = std::to_string(r.iteration) + "," + std::to_string(r.epoch) + "," + format_real(r.train_loss) +
                     "," + format_real(r.lambda) + "," + format_real(r.lr) + ",";
  if (r.eval_accuracy) line += format_real(*r.eval_accuracy);
  for (real b : r.branch_losses) line += "," + format_real(b);
  return line;
}

void MetricsWriter::write(const MetricsRecord& record) {
  if (record.branch_losses.size() != branches_) {
    fail(ErrorKind::state, "metrics record has " + std::to_string(record.branch_losses.size()) +
                               " branch losses, header declares " + std::to_string(branches_));
  }
  out_ << row(record) << '\n';
  out_.flush();
  if (!out_) fail(ErrorKind::io, "failed writing metrics file '" + path_.string() + "'");
}

TrainResult train_loop(Network& net, const Dataset& train, const Dataset& test, const TrainerConfig& config,
                       const std::optional<std::filesystem::path>& run_dir) {
  config.validate();
  train.validate();
  test.validate();
  const std::size_t per_epoch = batch_count(train.size(), config.batch);
  const auto total = static_cast<std::int64_t>(config.epochs * per_epoch);
  Trainer trainer(net, config, total);

  const std::size_t branches = has_side_heads(config.mode) && net.has_side_heads() ? net.spec().block_count() : 1;
  std::optional<MetricsWriter> writer;
  if (run_dir) writer.emplace(*run_dir / "metrics.csv", branches);

  TrainResult result;
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x62617463u};
    std::mt19937_64 seeder(seq);
    const BatchSequence epoch_batches = batches(train, config.batch, seeder());
    for (std::size_t k = 0; k < epoch_batches.size(); ++k) {
      Batch b = epoch_batches[k];
      MetricsRecord rec = trainer.train_step(b.images, b.labels, epoch);
      if (k + 1 == epoch_batches.size()) {
        rec.eval_accuracy = evaluate(net, test, config.eval_batch);
        result.final_accuracy = *rec.eval_accuracy;
        if (!have_best || *rec.eval_accuracy > result.best_accuracy) {
          have_best = true;
          result.best_accuracy = *rec.eval_accuracy;
          result.best_epoch = epoch;
          if (run_dir) save_checkpoint(network_checkpoint(net), *run_dir / "checkpoint_best.ckpt");
        }
      }
      result.final_lambda = rec.lambda;
      if (writer) writer->write(rec);
      result.metrics.push_back(std::move(rec));
    }
  }
  if (run_dir) save_checkpoint(network_checkpoint(net), *run_dir / "checkpoint_final.ckpt");
  return result;
}

}  // namespace spikeshort
