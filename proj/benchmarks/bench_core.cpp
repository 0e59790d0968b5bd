#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "spikeshort/data.hpp"
#include "spikeshort/network.hpp"
#include "spikeshort/neuron.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"
#include "spikeshort/trainer.hpp"

using namespace spikeshort;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<real> dist(0.0, 1.0);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({64, channels, 16, 16}, 1);
  Tensor k = random_tensor({channels, channels, 3, 3}, 2);
  TapeScope off(nullptr);
  for (auto _ : state) {
    Tensor y = conv2d(x, k, 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_Conv2dBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({64, channels, 16, 16}, 1).set_requires_grad(true);
  Tensor k = random_tensor({channels, channels, 3, 3}, 2).set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = sum(conv2d(x, k, 1, 1));
    tape.backward(loss);
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_LifUnroll(benchmark::State& state) {
  const auto timesteps = static_cast<std::size_t>(state.range(0));
  std::vector<Tensor> currents;
  for (std::size_t t = 0; t < timesteps; ++t) currents.push_back(random_tensor({64, 16, 16, 16}, t));
  NeuronConfig cfg;
  SurrogateSpec sg;
  TapeScope off(nullptr);
  for (auto _ : state) {
    auto spikes = lif_unroll(currents, cfg, sg);
    benchmark::DoNotOptimize(spikes.back().values().data());
  }
}
BENCHMARK(BM_LifUnroll)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_Deep8TrainStep(benchmark::State& state) {
  const auto mode = static_cast<TrainingMode>(state.range(0));
  SyntheticTaskSpec task;
  task.train_per_class = 7;
  auto [train, test] = make_synthetic(task);
  Network net = Network::build(NetworkSpec::deep8(mode), 0);
  TrainerConfig cfg;
  cfg.mode = mode;
  cfg.batch = 64;
  Trainer trainer(net, cfg, 1'000'000);
  BatchSequence seq(train, 64, 0);
  const Batch batch = seq[0];
  for (auto _ : state) {
    auto record = trainer.train_step(batch.images, batch.labels);
    benchmark::DoNotOptimize(record.train_loss);
  }
  state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_Deep8TrainStep)
    ->Arg(static_cast<int>(TrainingMode::vanilla))
    ->Arg(static_cast<int>(TrainingMode::evolutionary))
    ->Unit(benchmark::kMillisecond);

static void BM_Deep8Inference(benchmark::State& state) {
  Network net = Network::build(NetworkSpec::deep8(TrainingMode::vanilla), 0);
  Tensor x = random_tensor({256, 1, 13, 13}, 3);
  for (auto _ : state) {
    Tensor logits = net.forward_infer(x);
    benchmark::DoNotOptimize(logits.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_Deep8Inference)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
