#include <gtest/gtest.h>

#include <cstdlib>
#include <numeric>
#include <set>

#include "spikeshort/data.hpp"
#include "spikeshort/errors.hpp"
#include "spikeshort/network.hpp"
#include "spikeshort/trainer.hpp"
#include "test_support.hpp"

using namespace spikeshort;
using namespace spikeshort::testing;

namespace {

struct IdxFixture {
  TempDir dir;
  std::filesystem::path images = dir / "images.idx";
  std::filesystem::path labels = dir / "labels.idx";
};

Error error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error raised";
  return Error(ErrorKind::state, "none");
}

}  // namespace

TEST(Idx, TwoByTwoFixture) {
  IdxFixture fx;
  write_bytes(fx.images, idx_images_bytes(2, 2, 2, {0, 255, 51, 102, 255, 255, 0, 0}));
  write_bytes(fx.labels, idx_labels_bytes({3, 7}));
  const Dataset d = load_idx(fx.images, fx.labels);
  EXPECT_EQ(d.images.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(d.labels, (std::vector<int>{3, 7}));
  EXPECT_EQ(d.classes, 8u);
  EXPECT_EQ(to_vector(d.images), (std::vector<real>{0.0, 1.0, 0.2, 0.4, 1.0, 1.0, 0.0, 0.0}));
  EXPECT_EQ(load_idx(fx.images, fx.labels, "train", 10).classes, 10u);
}

TEST(Idx, PixelRoundTrip) {
  IdxFixture fx;
  std::vector<std::uint8_t> pixels(5 * 3 * 4);
  std::iota(pixels.begin(), pixels.end(), std::uint8_t{0});
  write_bytes(fx.images, idx_images_bytes(5, 3, 4, pixels));
  write_bytes(fx.labels, idx_labels_bytes({0, 1, 2, 1, 0}));
  const Dataset d = load_idx(fx.images, fx.labels);
  const auto v = to_vector(d.images);
  for (std::size_t i = 0; i < pixels.size(); ++i) EXPECT_EQ(static_cast<int>(std::lround(v[i] * 255.0)), pixels[i]);
}

TEST(Idx, WrongMagicNamesValue) {
  IdxFixture fx;
  auto bytes = idx_images_bytes(1, 2, 2, {0, 0, 0, 0});
  bytes[3] = 0x04;
  write_bytes(fx.images, bytes);
  write_bytes(fx.labels, idx_labels_bytes({0}));
  const Error e = error_of([&] { load_idx(fx.images, fx.labels); });
  EXPECT_EQ(e.kind(), ErrorKind::format);
  EXPECT_NE(std::string(e.what()).find("0x00000804"), std::string::npos) << e.what();
}

TEST(Idx, TruncatedIsFormatError) {
  IdxFixture fx;
  auto bytes = idx_images_bytes(2, 2, 2, std::vector<std::uint8_t>(8, 1));
  bytes.pop_back();
  write_bytes(fx.images, bytes);
  write_bytes(fx.labels, idx_labels_bytes({0, 1}));
  EXPECT_EQ(error_of([&] { load_idx(fx.images, fx.labels); }).kind(), ErrorKind::format);
}

TEST(Idx, CountMismatchIsConsistencyError) {
  IdxFixture fx;
  write_bytes(fx.images, idx_images_bytes(2, 2, 2, std::vector<std::uint8_t>(8, 1)));
  write_bytes(fx.labels, idx_labels_bytes({0, 1, 1}));
  EXPECT_EQ(error_of([&] { load_idx(fx.images, fx.labels); }).kind(), ErrorKind::consistency);
}

TEST(Idx, MissingFileIsIoError) {
  EXPECT_EQ(error_of([] { load_idx("/nonexistent/a", "/nonexistent/b"); }).kind(), ErrorKind::io);
}

TEST(Normalize, IdentityStatsLeaveData) {
  auto [train, test] = make_synthetic(SyntheticTaskSpec{});
  EXPECT_EQ(to_vector(normalize(train, 0.0, 1.0).images), to_vector(train.images));
}

TEST(Normalize, ConstantDatasetIsInputError) {
  Dataset d;
  d.images = Tensor::full({3, 1, 2, 2}, 0.5);
  d.labels = {0, 1, 0};
  d.classes = 2;
  EXPECT_EQ(error_of([&] { compute_normalization(d); }).kind(), ErrorKind::input);
}

TEST(Normalize, ResultHasZeroMeanUnitStd) {
  SyntheticTaskSpec spec;
  spec.channels = 3;
  auto [train, test] = make_synthetic(spec);
  const Dataset n = normalize(train, compute_normalization(train));
  const auto stats = compute_normalization(n);
  ASSERT_EQ(stats.mean.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(stats.mean[c], 0.0, 1e-6);
    EXPECT_NEAR(stats.std[c], 1.0, 1e-6);
  }
  EXPECT_EQ(n.labels, train.labels);
}

TEST(Synthetic, Deterministic) {
  SyntheticTaskSpec spec;
  spec.seed = 9;
  auto [a_train, a_test] = make_synthetic(spec);
  auto [b_train, b_test] = make_synthetic(spec);
  EXPECT_EQ(to_vector(a_train.images), to_vector(b_train.images));
  EXPECT_EQ(to_vector(a_test.images), to_vector(b_test.images));
  EXPECT_NE(to_vector(a_train.images), to_vector(a_test.images));
  spec.seed = 10;
  EXPECT_NE(to_vector(make_synthetic(spec).first.images), to_vector(a_train.images));
}

TEST(Synthetic, BalancedClassesAndBounds) {
  SyntheticTaskSpec spec;
  auto [train, test] = make_synthetic(spec);
  EXPECT_EQ(train.size(), spec.classes * spec.train_per_class);
  EXPECT_EQ(test.size(), spec.classes * spec.test_per_class);
  std::vector<std::size_t> counts(spec.classes, 0);
  for (int l : train.labels) ++counts[static_cast<std::size_t>(l)];
  for (auto c : counts) EXPECT_EQ(c, spec.train_per_class);
  for (real v : train.images.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Synthetic, NoiselessTaskIsSolvedByPrototypes) {
  SyntheticTaskSpec spec;
  spec.noise = 0.0;
  const auto protos = synthetic_prototypes(spec);
  auto [train, test] = make_synthetic(spec);
  const std::size_t pixels = spec.height * spec.width;
  std::size_t correct = 0;
  const auto v = test.images.values();
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    real best_d = 1e300;
    for (std::size_t c = 0; c < protos.size(); ++c) {
      real dist = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) {
        const real d = v[i * pixels + p] - protos[c].values()[p];
        dist += d * d;
      }
      if (dist < best_d) best_d = dist, best = c;
    }
    correct += static_cast<int>(best) == test.labels[i];
  }
  EXPECT_EQ(correct, test.size());
}

TEST(Synthetic, InvalidSpecIsConfigurationError) {
  SyntheticTaskSpec spec;
  spec.classes = 1;
  EXPECT_EQ(error_of([&] { make_synthetic(spec); }).kind(), ErrorKind::configuration);
  spec = SyntheticTaskSpec{};
  spec.contrast = 0.0;
  EXPECT_EQ(error_of([&] { make_synthetic(spec); }).kind(), ErrorKind::configuration);
}

TEST(Batching, EpochIsAPartition) {
  SyntheticTaskSpec spec;
  spec.train_per_class = 7;
  auto [train, test] = make_synthetic(spec);
  for (std::size_t batch : {1u, 8u, 64u, 70u, 200u}) {
    const auto seq = batches(train, batch, 3);
    EXPECT_EQ(seq.size(), batch_count(train.size(), batch));
    std::multiset<std::size_t> seen;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto& g = seq.index_groups()[i];
      if (i + 1 < seq.size()) EXPECT_EQ(g.size(), batch);
      seen.insert(g.begin(), g.end());
    }
    EXPECT_EQ(seen.size(), train.size());
    std::set<std::size_t> unique(seen.begin(), seen.end());
    EXPECT_EQ(unique.size(), train.size());
  }
}

TEST(Batching, FullBatchAndDeterminism) {
  auto [train, test] = make_synthetic(SyntheticTaskSpec{});
  const auto one = batches(train, train.size(), 5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].images.shape()[0], train.size());
  EXPECT_EQ(batches(train, 16, 4).index_groups(), batches(train, 16, 4).index_groups());
  EXPECT_NE(batches(train, 16, 4).index_groups(), batches(train, 16, 5).index_groups());
  std::size_t n = 0;
  for (const Batch& b : batches(train, 16, 4)) {
    EXPECT_EQ(b.labels.size(), b.images.shape()[0]);
    for (std::size_t i = 0; i < b.labels.size(); ++i) EXPECT_EQ(b.labels[i], train.labels[b.indices[i]]);
    n += b.labels.size();
  }
  EXPECT_EQ(n, train.size());
  EXPECT_EQ(error_of([&] { batches(train, 0, 0); }).kind(), ErrorKind::input);
}

TEST(Crop, CentreWindow) {
  Dataset d;
  d.images = Tensor::zeros({1, 1, 4, 4});
  auto v = d.images.values();
  std::iota(v.begin(), v.end(), 0.0);
  d.labels = {0};
  d.classes = 1;
  const Dataset c = center_crop(d, 2);
  EXPECT_EQ(to_vector(c.images), (std::vector<real>{5, 6, 9, 10}));
  EXPECT_EQ(error_of([&] { center_crop(d, 5); }).kind(), ErrorKind::configuration);
}

TEST(DatasetFile, RoundTrip) {
  auto [train, test] = make_synthetic(SyntheticTaskSpec{});
  TempDir dir;
  save_dataset(test, dir / "test.ckpt");
  const Dataset back = load_dataset(dir / "test.ckpt");
  EXPECT_EQ(back.labels, test.labels);
  EXPECT_EQ(back.classes, test.classes);
  EXPECT_EQ(back.split, test.split);
  const auto a = to_vector(back.images), b = to_vector(test.images);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], static_cast<real>(static_cast<float>(b[i])));
}

// Runs only when SPIKESHORT_MNIST_DIR holds the four standard IDX files.
TEST(Mnist, LoadsStandardFiles) {
  const char* root = std::getenv("SPIKESHORT_MNIST_DIR");
  if (root == nullptr) GTEST_SKIP() << "SPIKESHORT_MNIST_DIR not set";
  const std::filesystem::path dir(root);
  const Dataset train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", "train", 10);
  const Dataset test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", "test", 10);
  EXPECT_EQ(train.size(), 60000u);
  EXPECT_EQ(test.size(), 10000u);
  EXPECT_EQ(train.images.shape(), (Shape{60000, 1, 28, 28}));
  const auto stats = compute_normalization(train);
  EXPECT_NEAR(stats.mean[0], 0.1307, 1e-3);
  EXPECT_NEAR(stats.std[0], 0.3081, 1e-3);
}
