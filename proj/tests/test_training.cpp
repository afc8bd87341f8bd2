#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "resfeat/synthetic.hpp"
#include "resfeat/training.hpp"

using namespace resfeat;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(ModelVariant variant) {
  ModelConfig cfg = variant == ModelVariant::fused ? ModelConfig::fused() : ModelConfig::ablation();
  cfg.encoder_channels = {4, 4, 4, 4, 6, 6, 6, 6};
  cfg.head_channels = 8;
  cfg.refine_hidden = 16;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.width = 128;
  cfg.height = 96;
  cfg.batch_size = 2;
  cfg.max_steps = 3;
  cfg.val_interval_steps = 2;
  cfg.checkpoint_interval = 2;
  cfg.keypoints_per_image = 60;
  cfg.val_images = 1;
  return cfg;
}

std::vector<ImageRGB> tiny_corpus(int n) {
  std::vector<ImageRGB> out;
  for (int i = 0; i < n; ++i) out.push_back(synthetic_texture(128, 96, 100 + static_cast<std::uint64_t>(i)));
  return out;
}

}  // namespace

TEST(Triplet, HingeExamples) {
  EXPECT_DOUBLE_EQ(triplet_loss(0.5, 3.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(1.0, 1.5, 2.0), 1.5);
  EXPECT_DOUBLE_EQ(triplet_loss(0.7, 0.7, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(triplet_loss(2.0, 0.0, 2.0), 4.0);
}

TEST(Triplet, MiningRespectsExclusionRadius) {
  RowMatrix<double> a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 1, 0, 0, 1;
  const std::vector<Point2> far{{10, 10}, {30, 10}};
  const TripletBatch t = mine_triplets(a, b, far, 8.0);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].anchor, 0);
  EXPECT_EQ(t[0].positive, 0);
  EXPECT_EQ(t[0].negative, 1);
  EXPECT_EQ(t[1].negative, 0);
  const std::vector<Point2> near{{10, 10}, {15, 10}};
  EXPECT_TRUE(mine_triplets(a, b, near, 8.0).empty());
}

TEST(Triplet, HardestNegativeWins) {
  RowMatrix<double> a(3, 2), b(3, 2);
  a << 1, 0, 0, 1, -1, 0;
  b << 1, 0, 0.9, 0.1, -1, 0;
  const std::vector<Point2> pts{{0, 0}, {20, 0}, {40, 0}};
  const TripletBatch t = mine_triplets(a, b, pts, 8.0);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].negative, 1);  // b1 is closest to a0 among the others
  EXPECT_EQ(t[2].negative, 1);
}

TEST(Triplet, LossSumAndGradientDirection) {
  Tensor<double> da({1, 2}, (Tensor<double>::Array(2) << 1, 0).finished());
  Tensor<double> db({2, 2}, (Tensor<double>::Array(4) << 1, 0, 0, 1).finished());
  const TripletBatch batch{{0, 0, 1}};
  Tensor<double>::Array ga = Tensor<double>::Array::Zero(2), gb = Tensor<double>::Array::Zero(4);
  const double loss = triplet_loss_sum(da, db, batch, 2.0, &ga, &gb);
  EXPECT_NEAR(loss, 2.0 - std::sqrt(2.0), 1e-12);
  // d(loss)/d(negative) = -(n - a) / |n - a|
  EXPECT_NEAR(gb[2], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(gb[3], -1.0 / std::sqrt(2.0), 1e-12);
  // Inactive hinge: zero gradient.
  const double none = triplet_loss_sum(da, db, batch, 0.1, &ga, &gb);
  EXPECT_EQ(none, 0.0);
}

TEST(TrainConfig, StepsPerEpoch) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.steps_per_epoch(200), 50);
  EXPECT_EQ(cfg.steps_per_epoch(180), 45);
  EXPECT_EQ(cfg.steps_per_epoch(5), 2);
  EXPECT_EQ(cfg.total_steps(180), 90);
  cfg.max_steps = 7;
  EXPECT_EQ(cfg.total_steps(180), 7);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MetricsLog, JsonRoundTrip) {
  MetricsRecord r;
  r.step = 12;
  r.loss = 1.25;
  r.val_ms = 0.5;
  const std::string line = metrics_record_json(r);
  EXPECT_EQ(line, R"({"step":12,"loss":1.25,"val_ms":0.5,"wall_ms":null})");
  const MetricsRecord back = parse_metrics_record(line);
  EXPECT_EQ(back.step, 12);
  EXPECT_EQ(*back.loss, 1.25);
  EXPECT_EQ(*back.val_ms, 0.5);
  EXPECT_FALSE(back.wall_ms.has_value());
  EXPECT_THROW(parse_metrics_record("{\"loss\":1}"), FormatError);
  EXPECT_THROW(parse_metrics_record("not json"), FormatError);
}

TEST(Pairs, IdentityHomographyGivesExactCorrespondences) {
  const ImageRGB img = synthetic_texture(128, 96, 3);
  const TrainConfig cfg = tiny_train();
  const CorrespondencePair p = make_pair_with(img, Homography::identity(), DetectorConfig{}, cfg);
  ASSERT_GT(p.size(), 10);
  for (Index i = 0; i < p.size(); ++i) {
    const Keypoint& kp = p.keypoints_a[static_cast<std::size_t>(i)];
    EXPECT_NEAR((p.points_b[static_cast<std::size_t>(i)] - Point2(kp.x, kp.y)).norm(), 0.0, 1e-12);
    // Same image, same location and scale: identical handcrafted input.
    EXPECT_LT((p.y1_a.row(i) - p.y1_b.row(i)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Pairs, TranslationMapsPoints) {
  const ImageRGB img = synthetic_texture(128, 96, 4);
  const TrainConfig cfg = tiny_train();
  const CorrespondencePair p = make_pair_with(img, Homography::translation(6, -3), DetectorConfig{}, cfg);
  ASSERT_GT(p.size(), 5);
  for (Index i = 0; i < p.size(); ++i) {
    const Keypoint& kp = p.keypoints_a[static_cast<std::size_t>(i)];
    EXPECT_NEAR(p.points_b[static_cast<std::size_t>(i)].x(), kp.x + 6, 1e-9);
    EXPECT_NEAR(p.points_b[static_cast<std::size_t>(i)].y(), kp.y - 3, 1e-9);
  }
}

TEST(TrainLoop, ZeroEpochsWritesInitialCheckpointOnly) {
  const fs::path dir = fs::temp_directory_path() / "resfeat_test_train0";
  fs::remove_all(dir);
  TrainConfig cfg = tiny_train();
  cfg.max_steps = 0;
  cfg.epochs = 0;
  FusionModel<float> model(tiny(ModelVariant::fused), 1);
  const auto corpus = tiny_corpus(2);
  const TrainResult r = train_loop(corpus, {}, model, cfg, AugmentConfig{}, DetectorConfig{}, {dir, {}});
  EXPECT_EQ(r.steps, 0);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].step, 0);
  EXPECT_FALSE(r.records[0].loss.has_value());
  ASSERT_EQ(r.checkpoints.size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "checkpoint_000000.rft"));
  EXPECT_FALSE(fs::exists(dir / "model.rft"));
}

TEST(TrainLoop, DeterministicLogAndCheckpoints) {
  const auto corpus = tiny_corpus(4);
  const TrainConfig cfg = tiny_train();
  const std::vector<ImageRGB> val_images(corpus.end() - 1, corpus.end());
  const std::span<const ImageRGB> train(corpus.data(), corpus.size() - 1);
  const auto val = make_validation_set(val_images, AugmentConfig{}, DetectorConfig{}, cfg);
  ASSERT_EQ(val.size(), 1u);

  std::vector<std::vector<MetricsRecord>> runs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = fs::temp_directory_path() / ("resfeat_test_train" + std::to_string(run + 1));
    fs::remove_all(dir);
    FusionModel<float> model(tiny(ModelVariant::fused), 5);
    const TrainResult r = train_loop(train, val, model, cfg, AugmentConfig{}, DetectorConfig{}, {dir, {}});
    EXPECT_EQ(r.steps, 3);
    ASSERT_EQ(r.records.size(), 4u);
    EXPECT_TRUE(r.records[0].val_ms.has_value());
    EXPECT_FALSE(r.records[1].val_ms.has_value());
    EXPECT_TRUE(r.records[2].val_ms.has_value());
    EXPECT_TRUE(fs::exists(dir / "checkpoint_000000.rft"));
    EXPECT_TRUE(fs::exists(dir / "checkpoint_000002.rft"));
    EXPECT_TRUE(fs::exists(dir / "checkpoint_000003.rft"));
    EXPECT_TRUE(fs::exists(dir / "model.rft"));
    EXPECT_EQ(read_metrics_log(dir / "metrics.jsonl").size(), 4u);
    runs.push_back(r.records);
  }
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    EXPECT_EQ(metrics_record_json(runs[0][i]), metrics_record_json(runs[1][i]));
  }
}

TEST(TrainStep, LossDecreasesOnRepeatedBatch) {
  const ImageRGB img = synthetic_texture(128, 96, 8);
  const TrainConfig cfg = tiny_train();
  const std::vector<CorrespondencePair> batch{
      make_pair_with(img, Homography::translation(3, 2), DetectorConfig{}, cfg)};
  FusionModel<float> model(tiny(ModelVariant::fused), 9);
  const StepResult first = train_step(model, batch, cfg);
  ASSERT_FALSE(first.skipped);
  StepResult last = first;
  for (int i = 0; i < 20; ++i) last = train_step(model, batch, cfg);
  EXPECT_LT(last.loss, first.loss);
}

TEST(Seeds, MixSeedSpreads) {
  EXPECT_NE(mix_seed(0, 0), mix_seed(0, 1));
  EXPECT_NE(mix_seed(0, 1), mix_seed(1, 0));
  EXPECT_EQ(mix_seed(3, 4), mix_seed(3, 4));
}
