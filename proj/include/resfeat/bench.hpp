#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "resfeat/feature_file.hpp"
#include "resfeat/hpatches.hpp"
#include "resfeat/model.hpp"
#include "resfeat/ransac.hpp"
#include "resfeat/sift.hpp"
#include "resfeat/training.hpp"

namespace resfeat {

struct BenchConfig {
  int width = 320;
  int height = 240;
  int max_keypoints = 300;
  double ratio_threshold = 0.94;
  bool mutual = true;
  double inlier_threshold = 0.5;
  double ms_threshold = 3.0;
  int ransac_max_iterations = 5000;
  double ransac_confidence = 0.9999;
  std::uint64_t seed = 0;

  /// 240 x 320, 300 keypoints.
  static BenchConfig low_res();
  /// 480 x 640, 1000 keypoints.
  static BenchConfig high_res();
  static BenchConfig preset(const std::string& name);
  void validate() const;
};

/// Bilinear resize to exactly width x height; `h_gt` (a -> b) is conjugated
/// by the two scalings: H' = S_b * H * S_a^-1.
struct ResizedPair {
  ImageRGB image_a;
  ImageRGB image_b;
  Homography h_ab;
};
ImageRGB resize_for_bench(const ImageRGB& img, int width, int height);
/// Scaling that maps pixel coordinates of a (w x h) image into the resized frame.
Homography resize_scaling(Index from_width, Index from_height, int width, int height);
ResizedPair resize_pair_for_bench(const ImageRGB& a, const ImageRGB& b, const Homography& h_ab, int width,
                                  int height);

/// Features of one image under a method. Learned methods need a model.
struct MethodFeatures {
  std::vector<Keypoint> keypoints;
  RowMatrix<float> descriptors;
};
MethodFeatures extract_method(const ImageRGB& img, FeatureMethod method, const FusionModel<float>* model,
                              const DetectorConfig& det);

struct PairReport {
  std::string scene;
  int target = 0;  // image index k of the pair (1, k)
  Index keypoints_a = 0;
  Index keypoints_b = 0;
  Index matches = 0;
  Index correct_matches = 0;
  Index inliers = 0;
  bool estimated = false;
  double corner_error = 0.0;  // +inf when estimation failed
  double matching_score = 0.0;
};

struct MethodReport {
  std::string method;
  std::vector<PairReport> pairs;
  double ms_mean = 0.0;
  double cor1 = 0.0;
  double cor3 = 0.0;
  double cor5 = 0.0;
};

struct EvalOptions {
  BenchConfig bench;
  DetectorConfig detector;
  /// Directory for match visualizations; empty disables them.
  std::filesystem::path viz_dir;
  std::function<void(const std::string&)> log;
  /// Echoed into the report header for learned methods.
  std::optional<bool> normalize_halves;
  /// Scenes are processed on this many workers; results do not depend on it.
  int threads = 1;
};

/// extract -> match -> RANSAC -> metrics for every (1, k) pair of every scene.
MethodReport evaluate_method(const std::vector<HpatchesScene>& scenes, FeatureMethod method,
                             const FusionModel<float>* model, const EvalOptions& options);

/// JSON report {method, config, protocol, pairs: [...], summary: {ms_mean, cor1, cor3, cor5}}.
std::string report_json(const MethodReport& report, const EvalOptions& options);

struct SpeedupRow {
  std::string name;
  int steps_to_target = -1;  // -1: the target was never reached
  std::optional<double> speedup;  // nullopt with steps_to_target = -1 means "> budget"
  bool unbounded = false;         // reached at step 0 while the baseline needed > 0 steps
};

struct CompareResult {
  std::string baseline;
  double target = 0.0;        // baseline's final val_ms
  int baseline_steps = 0;     // first step at which the baseline reaches its final score
  int budget = 0;             // last step of the baseline curve
  std::vector<SpeedupRow> rows;
};

/// First logged step whose val_ms >= target; -1 if none.
int steps_to_reach(const std::vector<std::pair<int, double>>& curve, double target);

/// Speedups of every log against the first one (the baseline).
CompareResult compare_logs(const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& logs);
std::string format_compare_table(const CompareResult& result);

}  // namespace resfeat
