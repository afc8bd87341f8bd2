#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "resfeat/bench.hpp"
#include "resfeat/config.hpp"
#include "resfeat/feature_file.hpp"
#include "resfeat/hpatches.hpp"
#include "resfeat/synthetic.hpp"

using namespace resfeat;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("resfeat_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_identical_scene(const fs::path& dir, const ImageRGB& img) {
  std::array<ImageRGB, 6> images;
  images.fill(img);
  std::array<Homography, 5> h;
  h.fill(Homography::identity());
  write_scene(dir, images, h);
}

std::vector<MetricsRecord> curve_log(const std::vector<std::pair<int, double>>& points) {
  std::vector<MetricsRecord> out;
  for (const auto& [step, v] : points) {
    MetricsRecord r;
    r.step = step;
    r.val_ms = v;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Hpatches, IngestAndEnumerate) {
  const fs::path root = fresh_dir("ingest");
  const ImageRGB img = synthetic_texture(64, 48, 1);
  write_identical_scene(root / "v_b", img);
  write_identical_scene(root / "i_a", img);
  const auto scenes = ingest_hpatches(root);
  ASSERT_EQ(scenes.size(), 2u);
  EXPECT_EQ(scenes[0].name, "i_a");
  EXPECT_EQ(scenes[1].name, "v_b");
  const auto pairs = enumerate_pairs(scenes);
  ASSERT_EQ(pairs.size(), 10u);
  EXPECT_EQ(pairs[0].scene, 0u);
  EXPECT_EQ(pairs[0].target, 2);
  EXPECT_EQ(pairs[9].scene, 1u);
  EXPECT_EQ(pairs[9].target, 6);
}

TEST(Hpatches, MalformedSceneSkipped) {
  const fs::path root = fresh_dir("ingest_bad");
  const ImageRGB img = synthetic_texture(64, 48, 1);
  write_identical_scene(root / "good", img);
  write_identical_scene(root / "broken", img);
  fs::remove(root / "broken" / "H_1_4");
  std::vector<std::string> warnings;
  const auto scenes = ingest_hpatches(root, [&](const std::string& w) { warnings.push_back(w); });
  ASSERT_EQ(scenes.size(), 1u);
  EXPECT_EQ(scenes[0].name, "good");
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("broken"), std::string::npos);
  EXPECT_THROW(ingest_hpatches(fresh_dir("ingest_empty")), DataError);
}

TEST(Bench, ResizeConjugatesHomography) {
  const ImageRGB a = synthetic_texture(640, 480, 2);
  const ResizedPair r = resize_pair_for_bench(a, a, Homography::translation(10, 0), 320, 240);
  EXPECT_EQ(r.image_a.width(), 320);
  EXPECT_EQ(r.image_b.height(), 240);
  EXPECT_LT((r.h_ab.apply(Point2(0, 0)) - Point2(5, 0)).norm(), 1e-9);
  EXPECT_LT((r.h_ab.apply(Point2(100, 37)) - Point2(105, 37)).norm(), 1e-9);
  const Homography s = resize_scaling(640, 480, 320, 240);
  EXPECT_LT((s.apply(Point2(639, 479)) - Point2(319.25, 239.25)).norm(), 1e-9);
}

TEST(Bench, Presets) {
  EXPECT_EQ(BenchConfig::preset("low").width, 320);
  EXPECT_EQ(BenchConfig::preset("low").max_keypoints, 300);
  EXPECT_EQ(BenchConfig::preset("high").height, 480);
  EXPECT_EQ(BenchConfig::preset("high").max_keypoints, 1000);
  EXPECT_THROW(BenchConfig::preset("medium"), ConfigError);
}

TEST(FeatureFile, RoundTrip) {
  FeatureFile f;
  f.method = FeatureMethod::fused;
  f.keypoints.resize(2);
  f.keypoints[0] = {1.5, 2.5, 1.6, 0.25, 0.125};
  f.keypoints[1] = {10.0, 20.0, 3.2, 6.0, 0.5};
  f.descriptors = RowMatrix<float>::Random(2, 256);
  const std::string bytes = serialize_features(f);
  EXPECT_EQ(bytes.size(), 11u + 2u * (5u + 256u) * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "RFF1");
  const FeatureFile back = deserialize_features(bytes);
  EXPECT_EQ(back.method, FeatureMethod::fused);
  ASSERT_EQ(back.keypoints.size(), 2u);
  EXPECT_EQ(back.keypoints[1].x, 10.0);
  EXPECT_EQ(back.keypoints[0].orientation, 0.25);
  EXPECT_EQ(back.descriptors, f.descriptors);
}

TEST(FeatureFile, EmptyAndCorrupt) {
  FeatureFile empty;
  empty.descriptors.resize(0, 128);
  const std::string bytes = serialize_features(empty);
  EXPECT_EQ(bytes.size(), 11u);
  const FeatureFile back = deserialize_features(bytes);
  EXPECT_TRUE(back.keypoints.empty());
  EXPECT_EQ(back.descriptors.cols(), 128);

  EXPECT_THROW(deserialize_features("RFF2" + bytes.substr(4)), FormatError);
  EXPECT_THROW(deserialize_features(bytes.substr(0, 7)), FormatError);
  FeatureFile one;
  one.keypoints.resize(1);
  one.descriptors = RowMatrix<float>::Zero(1, 128);
  const std::string full = serialize_features(one);
  EXPECT_THROW(deserialize_features(full.substr(0, full.size() - 1)), FormatError);
  EXPECT_THROW(deserialize_features(full + "x"), FormatError);
  std::string bad_method = full;
  bad_method[10] = 9;
  EXPECT_THROW(deserialize_features(bad_method), FormatError);
  EXPECT_THROW(read_features(fresh_dir("ff") / "none.rff"), DataError);
}

TEST(Compare, SelfIsOne) {
  const auto log = curve_log({{0, 0.1}, {100, 0.3}, {200, 0.5}});
  const CompareResult r = compare_logs({{"a", log}, {"b", log}});
  EXPECT_DOUBLE_EQ(r.target, 0.5);
  EXPECT_EQ(r.baseline_steps, 200);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(*r.rows[0].speedup, 1.0);
}

TEST(Compare, TenfolderAndBudget) {
  const auto base = curve_log({{0, 0.1}, {100, 0.2}, {500, 0.3}, {1000, 0.4}});
  const auto fast = curve_log({{0, 0.1}, {100, 0.45}, {1000, 0.5}});
  const auto slow = curve_log({{0, 0.1}, {1000, 0.35}});
  const CompareResult r = compare_logs({{"base", base}, {"fast", fast}, {"slow", slow}});
  EXPECT_EQ(r.baseline_steps, 1000);
  EXPECT_EQ(r.budget, 1000);
  EXPECT_EQ(r.rows[0].steps_to_target, 100);
  EXPECT_DOUBLE_EQ(*r.rows[0].speedup, 10.0);
  EXPECT_EQ(r.rows[1].steps_to_target, -1);
  EXPECT_FALSE(r.rows[1].speedup.has_value());
  const std::string table = format_compare_table(r);
  EXPECT_NE(table.find("fast\t100\t10.00"), std::string::npos) << table;
  EXPECT_NE(table.find("slow\t> 1000\t> budget"), std::string::npos) << table;
  EXPECT_EQ(steps_to_reach({{0, 0.1}, {50, 0.4}}, 0.4), 50);
  EXPECT_THROW(compare_logs({{"only", base}}), ConfigError);
}

TEST(Config, ParsingAndDefaults) {
  const AppConfig cfg = parse_app_config(R"({"train": {"batch_size": 8}, "model": {"small_mode": true}})");
  EXPECT_EQ(cfg.train.batch_size, 8);
  EXPECT_EQ(cfg.train.learning_rate, 1e-3);
  EXPECT_TRUE(cfg.model.small_mode);
  EXPECT_EQ(cfg.bench.max_keypoints, 300);
  EXPECT_THROW(parse_app_config(R"({"train": {"batch_sise": 8}})"), ConfigError);
  EXPECT_THROW(parse_app_config(R"({"trainer": {}})"), ConfigError);
  EXPECT_THROW(parse_app_config(R"({"train": {"batch_size": "four"}})"), ConfigError);
  EXPECT_THROW(parse_app_config("{"), ConfigError);
  EXPECT_THROW(parse_app_config(R"({"train": {"learning_rate": -1}})"), ConfigError);
  const AppConfig back = parse_app_config(app_config_to_json(cfg));
  EXPECT_EQ(app_config_to_json(back), app_config_to_json(cfg));
  const ModelConfig m = model_config_from_json(model_config_to_json(ModelConfig::ablation()));
  EXPECT_EQ(m.variant, ModelVariant::ablation);
  EXPECT_EQ(m.d_s, 256);
}

TEST(Eval, IdenticalImagesArePerfect) {
  const fs::path root = fresh_dir("eval_identical");
  write_identical_scene(root / "s", synthetic_texture(160, 120, 31));
  const auto scenes = ingest_hpatches(root);
  EvalOptions opts;
  opts.bench.width = 160;
  opts.bench.height = 120;
  const MethodReport r = evaluate_method(scenes, FeatureMethod::handcrafted, nullptr, opts);
  ASSERT_EQ(r.pairs.size(), 5u);
  EXPECT_DOUBLE_EQ(r.cor1, 1.0);
  EXPECT_DOUBLE_EQ(r.cor5, 1.0);
  EXPECT_DOUBLE_EQ(r.ms_mean, 1.0);
  for (const PairReport& p : r.pairs) {
    EXPECT_TRUE(p.estimated);
    EXPECT_LT(p.corner_error, 1e-6);
    EXPECT_EQ(p.matches, p.keypoints_a);
  }
  const auto j = nlohmann::json::parse(report_json(r, opts));
  EXPECT_EQ(j["method"], "handcrafted");
  EXPECT_EQ(j["pairs"].size(), 5u);
  EXPECT_EQ(j["pairs"][0]["pair"], "1-2");
  EXPECT_EQ(j["summary"]["cor3"], 1.0);
  EXPECT_TRUE(j["protocol"].contains("matching_score"));
}

TEST(Eval, ThreadCountDoesNotChangeResults) {
  const fs::path root = fresh_dir("eval_threads");
  for (int s = 0; s < 3; ++s) {
    const SyntheticScene scene = synthetic_scene(160, 120, 40 + static_cast<std::uint64_t>(s), AugmentConfig{});
    write_scene(root / ("scene_" + std::to_string(s)), scene.images, scene.h);
  }
  const auto scenes = ingest_hpatches(root);
  EvalOptions one;
  one.bench.width = 160;
  one.bench.height = 120;
  EvalOptions three = one;
  three.threads = 3;
  const auto a = report_json(evaluate_method(scenes, FeatureMethod::handcrafted, nullptr, one), one);
  const auto b = report_json(evaluate_method(scenes, FeatureMethod::handcrafted, nullptr, three), three);
  EXPECT_EQ(a, b);
}

TEST(Eval, LearnedMethodNeedsModel) {
  const fs::path root = fresh_dir("eval_nomodel");
  write_identical_scene(root / "s", synthetic_texture(160, 120, 31));
  EXPECT_THROW(evaluate_method(ingest_hpatches(root), FeatureMethod::fused, nullptr, EvalOptions{}), ConfigError);
}
