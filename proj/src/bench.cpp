#include "resfeat/bench.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "json.hpp"

#include "resfeat/error.hpp"
#include "resfeat/image_io.hpp"
#include "resfeat/matching.hpp"
#include "resfeat/metrics.hpp"
#include "resfeat/parallel.hpp"
#include "resfeat/visualize.hpp"

namespace resfeat {

BenchConfig BenchConfig::low_res() { return BenchConfig{}; }

BenchConfig BenchConfig::high_res() {
  BenchConfig cfg;
  cfg.width = 640;
  cfg.height = 480;
  cfg.max_keypoints = 1000;
  return cfg;
}

BenchConfig BenchConfig::preset(const std::string& name) {
  if (name == "low" || name == "240x320") return low_res();
  if (name == "high" || name == "480x640") return high_res();
  throw ConfigError("unknown resolution preset '" + name + "' (expected low/240x320 or high/480x640)");
}

void BenchConfig::validate() const {
  if (width < 32 || height < 32 || width % 8 != 0 || height % 8 != 0) {
    throw ConfigError("bench width/height must be >= 32 and divisible by 8");
  }
  if (max_keypoints < 1) throw ConfigError("bench.max_keypoints must be >= 1");
  if (!(ratio_threshold > 0.0)) throw ConfigError("bench.ratio_threshold must be > 0");
  if (!(inlier_threshold > 0.0)) throw ConfigError("bench.inlier_threshold must be > 0");
  if (!(ms_threshold > 0.0)) throw ConfigError("bench.ms_threshold must be > 0");
  if (ransac_max_iterations < 1) throw ConfigError("bench.ransac_max_iterations must be >= 1");
  if (!(ransac_confidence > 0.0 && ransac_confidence < 1.0)) {
    throw ConfigError("bench.ransac_confidence must be in (0, 1)");
  }
}

Homography resize_scaling(Index from_width, Index from_height, int width, int height) {
  const double sx = static_cast<double>(width) / static_cast<double>(from_width);
  const double sy = static_cast<double>(height) / static_cast<double>(from_height);
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  m(0, 2) = 0.5 * sx - 0.5;
  m(1, 2) = 0.5 * sy - 0.5;
  return Homography(m);
}

ImageRGB resize_for_bench(const ImageRGB& img, int width, int height) {
  if (std::min(img.width(), img.height()) < 32) throw DataError("image smaller than 32 px cannot be benchmarked");
  if (img.width() == width && img.height() == height) return img;
  return resize_bilinear(img, width, height);
}

ResizedPair resize_pair_for_bench(const ImageRGB& a, const ImageRGB& b, const Homography& h_ab, int width,
                                  int height) {
  ResizedPair out;
  out.image_a = resize_for_bench(a, width, height);
  out.image_b = resize_for_bench(b, width, height);
  const Homography sa = resize_scaling(a.width(), a.height(), width, height);
  const Homography sb = resize_scaling(b.width(), b.height(), width, height);
  out.h_ab = sb * h_ab * sa.inverse();
  return out;
}

MethodFeatures extract_method(const ImageRGB& img, FeatureMethod method, const FusionModel<float>* model,
                              const DetectorConfig& det) {
  MethodFeatures out;
  if (method == FeatureMethod::handcrafted) {
    HandcraftedFeatures f = extract_handcrafted(to_gray(img), det);
    out.keypoints = std::move(f.keypoints);
    out.descriptors = std::move(f.descriptors);
    return out;
  }
  if (!model) throw ConfigError("method " + to_string(method) + " requires a model checkpoint");
  const ModelVariant expected = method == FeatureMethod::fused ? ModelVariant::fused : ModelVariant::ablation;
  DescribedFeatures f = expected == ModelVariant::fused ? extract_fused(img, *model, det)
                                                        : extract_ablation(img, *model, det);
  out.keypoints = std::move(f.keypoints);
  out.descriptors = std::move(f.descriptors);
  return out;
}

namespace {

std::vector<Point2> keypoint_points(const std::vector<Keypoint>& kps) {
  std::vector<Point2> out;
  out.reserve(kps.size());
  for (const auto& kp : kps) out.emplace_back(kp.x, kp.y);
  return out;
}

}  // namespace

MethodReport evaluate_method(const std::vector<HpatchesScene>& scenes, FeatureMethod method,
                             const FusionModel<float>* model, const EvalOptions& options) {
  options.bench.validate();
  const BenchConfig& bc = options.bench;
  DetectorConfig det = options.detector;
  det.max_keypoints = bc.max_keypoints;
  MatchOptions mo;
  mo.ratio_threshold = bc.ratio_threshold;
  mo.mutual = bc.mutual;

  MethodReport report;
  report.method = to_string(method);
  if (!options.viz_dir.empty()) std::filesystem::create_directories(options.viz_dir);

  struct SceneResult {
    std::vector<PairReport> pairs;
    std::vector<std::string> messages;
  };
  std::vector<SceneResult> results(scenes.size());
  parallel_for(scenes.size(), options.threads, [&](std::size_t s) {
    const HpatchesScene& scene = scenes[s];
    SceneResult& out = results[s];
    const ImageRGB ref = load_image(scene.images[0]);
    const ImageRGB ref_resized = resize_for_bench(ref, bc.width, bc.height);
    const MethodFeatures fa = extract_method(ref_resized, method, model, det);
    const std::vector<Point2> pa = keypoint_points(fa.keypoints);
    for (int k = 2; k <= 6; ++k) {
      const std::size_t pair_index = s * 5 + static_cast<std::size_t>(k - 2);
      const ImageRGB target = load_image(scene.images[static_cast<std::size_t>(k - 1)]);
      const ResizedPair rp = resize_pair_for_bench(ref, target, scene.h[static_cast<std::size_t>(k - 2)], bc.width,
                                                   bc.height);
      const MethodFeatures fb = extract_method(rp.image_b, method, model, det);
      const std::vector<Point2> pb = keypoint_points(fb.keypoints);
      const auto matches = match_descriptors(fa.descriptors, fb.descriptors, mo);

      PairReport pr;
      pr.scene = scene.name;
      pr.target = k;
      pr.keypoints_a = static_cast<Index>(pa.size());
      pr.keypoints_b = static_cast<Index>(pb.size());
      pr.matches = static_cast<Index>(matches.size());
      pr.correct_matches = correct_match_count(matches, pa, pb, rp.h_ab, bc.ms_threshold, bc.width, bc.height);
      pr.matching_score = matching_score(matches, pa, pb, rp.h_ab, bc.ms_threshold, bc.width, bc.height,
                                         bc.max_keypoints);
      RansacOptions ro;
      ro.inlier_threshold = bc.inlier_threshold;
      ro.max_iterations = bc.ransac_max_iterations;
      ro.confidence = bc.ransac_confidence;
      ro.seed = mix_seed(bc.seed, pair_index);
      const HomographyEstimate est = estimate_homography(matches, pa, pb, ro);
      pr.estimated = est.success;
      pr.inliers = est.inlier_count();
      pr.corner_error = est.success ? corner_error(*est.h, rp.h_ab, bc.width, bc.height)
                                    : std::numeric_limits<double>::infinity();
      if (!est.success) {
        out.messages.push_back(report.method + " " + scene.name + " 1-" + std::to_string(k) + ": " + est.failure);
      }
      if (!options.viz_dir.empty()) {
        save_image(options.viz_dir / (report.method + "_" + scene.name + "_1_" + std::to_string(k) + ".png"),
                   visualize_matches(ref_resized, rp.image_b, matches, pa, pb, rp.h_ab));
      }
      out.pairs.push_back(std::move(pr));
    }
  });

  std::vector<double> errors;
  double ms_total = 0.0;
  for (SceneResult& r : results) {
    if (options.log) {
      for (const auto& m : r.messages) options.log(m);
    }
    for (PairReport& pr : r.pairs) {
      errors.push_back(pr.corner_error);
      ms_total += pr.matching_score;
      report.pairs.push_back(std::move(pr));
    }
  }
  const auto acc = homography_accuracy(errors, kCorThresholds);
  report.cor1 = acc.at(1.0);
  report.cor3 = acc.at(3.0);
  report.cor5 = acc.at(5.0);
  report.ms_mean = report.pairs.empty() ? 0.0 : ms_total / static_cast<double>(report.pairs.size());
  return report;
}

std::string report_json(const MethodReport& report, const EvalOptions& options) {
  using nlohmann::ordered_json;
  const BenchConfig& bc = options.bench;
  ordered_json j;
  j["method"] = report.method;
  j["config"] = {{"width", bc.width},
                 {"height", bc.height},
                 {"max_keypoints", bc.max_keypoints},
                 {"ratio_threshold", bc.ratio_threshold},
                 {"mutual", bc.mutual},
                 {"inlier_threshold", bc.inlier_threshold},
                 {"ms_threshold", bc.ms_threshold},
                 {"ransac_max_iterations", bc.ransac_max_iterations},
                 {"ransac_confidence", bc.ransac_confidence},
                 {"seed", bc.seed},
                 {"contrast_threshold", options.detector.contrast_threshold},
                 {"upright", options.detector.upright},
                 {"rootsift", options.detector.rootsift}};
  j["protocol"] = {
      {"matching_score",
       "correct matches (ground-truth reprojection error below ms_threshold) divided by the reference keypoints "
       "whose ground-truth image lies inside the target frame, capped at max_keypoints"},
      {"corner_error", "mean distance of the 4 image corners mapped by the estimated and ground-truth homography"},
      {"caveat", "absolute MS values depend on this definition and are not comparable across protocols"}};
  if (options.normalize_halves) j["protocol"]["normalize_halves"] = *options.normalize_halves;
  ordered_json pairs = ordered_json::array();
  for (const PairReport& p : report.pairs) {
    ordered_json e;
    e["scene"] = p.scene;
    e["pair"] = "1-" + std::to_string(p.target);
    e["keypoints_a"] = p.keypoints_a;
    e["keypoints_b"] = p.keypoints_b;
    e["matches"] = p.matches;
    e["correct_matches"] = p.correct_matches;
    e["inliers"] = p.inliers;
    e["estimated"] = p.estimated;
    e["corner_error"] = std::isfinite(p.corner_error) ? ordered_json(p.corner_error) : ordered_json(nullptr);
    e["matching_score"] = p.matching_score;
    pairs.push_back(std::move(e));
  }
  j["pairs"] = std::move(pairs);
  j["summary"] = {{"pairs", report.pairs.size()},
                  {"ms_mean", report.ms_mean},
                  {"cor1", report.cor1},
                  {"cor3", report.cor3},
                  {"cor5", report.cor5}};
  return j.dump(2) + "\n";
}

int steps_to_reach(const std::vector<std::pair<int, double>>& curve, double target) {
  for (const auto& [step, v] : curve) {
    if (v >= target) return step;
  }
  return -1;
}

CompareResult compare_logs(const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& logs) {
  if (logs.size() < 2) throw ConfigError("compare needs at least 2 metrics logs");
  std::vector<std::vector<std::pair<int, double>>> curves;
  for (const auto& [name, records] : logs) {
    curves.push_back(convergence_curve(records));
    if (curves.back().empty()) throw DataError("metrics log " + name + " has no val_ms entries");
  }
  CompareResult out;
  out.baseline = logs[0].first;
  out.target = curves[0].back().second;
  out.budget = curves[0].back().first;
  out.baseline_steps = steps_to_reach(curves[0], out.target);
  for (std::size_t i = 1; i < logs.size(); ++i) {
    SpeedupRow row;
    row.name = logs[i].first;
    row.steps_to_target = steps_to_reach(curves[i], out.target);
    if (row.steps_to_target > 0) {
      row.speedup = static_cast<double>(out.baseline_steps) / static_cast<double>(row.steps_to_target);
    } else if (row.steps_to_target == 0) {
      if (out.baseline_steps == 0) {
        row.speedup = 1.0;
      } else {
        row.unbounded = true;
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string format_compare_table(const CompareResult& r) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "baseline %s: final val_ms %.6f first reached at step %d (budget %d)\n",
                r.baseline.c_str(), r.target, r.baseline_steps, r.budget);
  out += buf;
  out += "log\tsteps_to_target\tspeedup\n";
  for (const SpeedupRow& row : r.rows) {
    std::string steps = row.steps_to_target >= 0 ? std::to_string(row.steps_to_target) : "> " + std::to_string(r.budget);
    std::string speed;
    if (row.speedup) {
      std::snprintf(buf, sizeof(buf), "%.2f", *row.speedup);
      speed = buf;
    } else if (row.unbounded) {
      speed = "inf";
    } else {
      speed = "> budget";
    }
    out += row.name + "\t" + steps + "\t" + speed + "\n";
  }
  return out;
}

}  // namespace resfeat
