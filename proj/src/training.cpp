#include "resfeat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "resfeat/error.hpp"
#include "resfeat/image_io.hpp"
#include "resfeat/layers.hpp"
#include "resfeat/matching.hpp"
#include "resfeat/metrics.hpp"

namespace resfeat {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(margin > 0.0)) throw ConfigError("train.margin must be > 0");
  if (!(negative_min_distance_px >= 0.0)) throw ConfigError("train.negative_min_distance_px must be >= 0");
  if (val_interval_steps < 1) throw ConfigError("train.val_interval_steps must be >= 1");
  if (checkpoint_interval < 1) throw ConfigError("train.checkpoint_interval must be >= 1");
  if (width < 32 || height < 32 || width % 8 != 0 || height % 8 != 0) {
    throw ConfigError("train.width and train.height must be >= 32 and divisible by 8");
  }
  if (val_images < 0) throw ConfigError("train.val_images must be >= 0");
  if (keypoints_per_image < 1) throw ConfigError("train.keypoints_per_image must be >= 1");
  if (min_correspondences < 2) throw ConfigError("train.min_correspondences must be >= 2");
  if (max_pair_tries < 1) throw ConfigError("train.max_pair_tries must be >= 1");
  if (!(border_margin >= 0.0)) throw ConfigError("train.border_margin must be >= 0");
  if (!(val_ratio_threshold > 0.0)) throw ConfigError("train.val_ratio_threshold must be > 0");
  if (!(val_ms_threshold > 0.0)) throw ConfigError("train.val_ms_threshold must be > 0");
}

int TrainConfig::steps_per_epoch(int n_train) const { return (n_train + batch_size - 1) / batch_size; }

int TrainConfig::total_steps(int n_train) const {
  if (max_steps > 0) return max_steps;
  return epochs * steps_per_epoch(n_train);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

DetectorConfig training_detector(const DetectorConfig& det, const TrainConfig& cfg) {
  DetectorConfig out = det;
  out.max_keypoints = cfg.keypoints_per_image;
  return out;
}

bool valid_at(const Plane& valid, const Point2& p) {
  const Index x0 = static_cast<Index>(std::floor(p.x())), y0 = static_cast<Index>(std::floor(p.y()));
  for (Index dy = 0; dy <= 1; ++dy) {
    for (Index dx = 0; dx <= 1; ++dx) {
      const Index x = std::min(x0 + dx, valid.cols() - 1), y = std::min(y0 + dy, valid.rows() - 1);
      if (x < 0 || y < 0 || valid(y, x) < 0.5f) return false;
    }
  }
  return true;
}

CorrespondencePair correspond(const ImageRGB& img, const ImageRGB& image_b, const Plane& valid,
                              const Homography& h, const HandcraftedFeatures& fa, const DetectorConfig& det,
                              const TrainConfig& cfg) {
  CorrespondencePair pair;
  pair.image_a = img;
  pair.image_b = image_b;
  pair.h_ab = h;
  const ScaleSpace space_b = build_scale_space(to_gray(image_b), det);
  std::vector<HandcraftedDescriptor> da, db;
  for (std::size_t i = 0; i < fa.keypoints.size(); ++i) {
    const Keypoint& kp = fa.keypoints[i];
    const Point2 pa(kp.x, kp.y);
    Point2 pb;
    LocalAffine la;
    try {
      pb = h.apply(pa);
      la = local_affine(h, pa, kp.orientation);
    } catch (const GeometryError&) {
      continue;
    }
    if (!inside_frame(pb, image_b.width(), image_b.height(), cfg.border_margin)) continue;
    if (!valid_at(valid, pb)) continue;
    const double orientation = det.upright ? 0.0 : la.angle;
    const auto yb = describe_at(space_b, pb, kp.sigma * la.scale, orientation, det);
    if (!yb) continue;
    pair.keypoints_a.push_back(kp);
    pair.source_index.push_back(static_cast<Index>(i));
    pair.points_b.push_back(pb);
    da.push_back(fa.descriptors.row(static_cast<Index>(i)).transpose());
    db.push_back(*yb);
  }
  const Index n = static_cast<Index>(da.size());
  pair.y1_a.resize(n, kHandcraftedDim);
  pair.y1_b.resize(n, kHandcraftedDim);
  for (Index i = 0; i < n; ++i) {
    pair.y1_a.row(i) = da[static_cast<std::size_t>(i)].transpose();
    pair.y1_b.row(i) = db[static_cast<std::size_t>(i)].transpose();
  }
  return pair;
}

}  // namespace

std::optional<CorrespondencePair> make_pair(const ImageRGB& img, const AugmentConfig& aug, const DetectorConfig& det,
                                            const TrainConfig& cfg, Rng& rng, const HandcraftedFeatures* features_a) {
  const DetectorConfig d = training_detector(det, cfg);
  HandcraftedFeatures local;
  if (!features_a) {
    local = extract_handcrafted(to_gray(img), d);
    features_a = &local;
  }
  for (int attempt = 0; attempt < cfg.max_pair_tries; ++attempt) {
    const Homography h = sample_random_homography(aug, img.width(), img.height(), rng);
    WarpResult<ImageRGB> warped = warp_image(img, h);
    const ImageRGB image_b = photometric_augment(warped.image, aug, rng);
    CorrespondencePair pair = correspond(img, image_b, warped.valid, h, *features_a, d, cfg);
    if (pair.size() >= cfg.min_correspondences) return pair;
  }
  return std::nullopt;
}

CorrespondencePair make_pair_with(const ImageRGB& img, const Homography& h, const DetectorConfig& det,
                                  const TrainConfig& cfg) {
  const DetectorConfig d = training_detector(det, cfg);
  const HandcraftedFeatures fa = extract_handcrafted(to_gray(img), d);
  WarpResult<ImageRGB> warped = warp_image(img, h);
  return correspond(img, warped.image, warped.valid, h, fa, d, cfg);
}

double triplet_loss(double d_ap, double d_an, double margin) { return std::max(0.0, d_ap - d_an + margin); }

TripletBatch mine_triplets(const RowMatrix<double>& desc_a, const RowMatrix<double>& desc_b,
                           std::span<const Point2> points_b, double min_distance_px) {
  TripletBatch batch;
  const Index n = desc_a.rows();
  if (n < 2 || desc_b.rows() != n || static_cast<Index>(points_b.size()) != n) return batch;
  const double min_sq = min_distance_px * min_distance_px;
  for (Index i = 0; i < n; ++i) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    const Point2& truth = points_b[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      if ((points_b[static_cast<std::size_t>(j)] - truth).squaredNorm() < min_sq) continue;
      const double d = (desc_a.row(i) - desc_b.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best >= 0) batch.push_back({i, i, best});
  }
  return batch;
}

template <typename Scalar>
double triplet_loss_sum(const Tensor<Scalar>& desc_a, const Tensor<Scalar>& desc_b, const TripletBatch& batch,
                        double margin, typename Tensor<Scalar>::Array* grad_a,
                        typename Tensor<Scalar>::Array* grad_b) {
  const Index dim = desc_a.dim(1);
  auto a = desc_a.matrix(desc_a.dim(0), dim);
  auto b = desc_b.matrix(desc_b.dim(0), dim);
  using Vec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
  double total = 0.0;
  for (const Triplet& t : batch) {
    const Vec va = a.row(t.anchor).template cast<double>();
    const Vec ap = va - b.row(t.positive).template cast<double>();
    const Vec an = va - b.row(t.negative).template cast<double>();
    const double d_ap = ap.norm(), d_an = an.norm();
    const double l = d_ap - d_an + margin;
    if (!(l > 0.0)) continue;
    total += l;
    if (!grad_a || !grad_b) continue;
    Eigen::Map<RowMatrix<Scalar>> ga(grad_a->data(), desc_a.dim(0), dim);
    Eigen::Map<RowMatrix<Scalar>> gb(grad_b->data(), desc_b.dim(0), dim);
    if (d_ap > 1e-12) {
      const Vec u = ap / d_ap;
      ga.row(t.anchor) += u.cast<Scalar>();
      gb.row(t.positive) -= u.cast<Scalar>();
    }
    if (d_an > 1e-12) {
      const Vec u = an / d_an;
      ga.row(t.anchor) -= u.cast<Scalar>();
      gb.row(t.negative) += u.cast<Scalar>();
    }
  }
  return total;
}

template <typename Scalar>
PairSample<Scalar> pair_sample(const CorrespondencePair& pair) {
  PairSample<Scalar> s;
  s.image_a = image_tensor<Scalar>(pair.image_a);
  s.image_b = image_tensor<Scalar>(pair.image_b);
  for (const Keypoint& kp : pair.keypoints_a) s.points_a.emplace_back(kp.x, kp.y);
  s.points_b.assign(pair.points_b.begin(), pair.points_b.end());
  const Index n = pair.size();
  s.y1_a = Tensor<Scalar>(Shape{n, kHandcraftedDim});
  s.y1_b = Tensor<Scalar>(Shape{n, kHandcraftedDim});
  s.y1_a.matrix(n, kHandcraftedDim) = pair.y1_a.cast<Scalar>();
  s.y1_b.matrix(n, kHandcraftedDim) = pair.y1_b.cast<Scalar>();
  return s;
}

template <typename Scalar>
PairLoss pair_loss(FusionModel<Scalar>& model, const PairSample<Scalar>& sample, const TrainConfig& cfg,
                   bool backward, const TripletBatch* fixed) {
  PairLoss out;
  const Index n = static_cast<Index>(sample.points_b.size());
  if (n < 2) return out;
  DescriptorTrace<Scalar> ta, tb;
  const Tensor<Scalar> desc_a = model.describe(sample.image_a, sample.points_a, sample.y1_a, backward ? &ta : nullptr);
  const Tensor<Scalar> desc_b = model.describe(sample.image_b, sample.points_b, sample.y1_b, backward ? &tb : nullptr);
  const Index dim = desc_a.dim(1);
  if (fixed) {
    out.batch = *fixed;
  } else {
    out.batch = mine_triplets(desc_a.matrix(n, dim).template cast<double>(),
                              desc_b.matrix(n, dim).template cast<double>(), sample.points_b,
                              cfg.negative_min_distance_px);
  }
  out.triplets = static_cast<Index>(out.batch.size());
  if (out.batch.empty()) return out;
  if (!backward) {
    out.loss_sum = triplet_loss_sum<Scalar>(desc_a, desc_b, out.batch, cfg.margin, nullptr, nullptr);
    return out;
  }
  typename Tensor<Scalar>::Array ga = Tensor<Scalar>::Array::Zero(desc_a.size());
  typename Tensor<Scalar>::Array gb = Tensor<Scalar>::Array::Zero(desc_b.size());
  out.loss_sum = triplet_loss_sum<Scalar>(desc_a, desc_b, out.batch, cfg.margin, &ga, &gb);
  model.describe_backward(ta, ga);
  model.describe_backward(tb, gb);
  return out;
}

template double triplet_loss_sum<float>(const Tensor<float>&, const Tensor<float>&, const TripletBatch&, double,
                                        Tensor<float>::Array*, Tensor<float>::Array*);
template double triplet_loss_sum<double>(const Tensor<double>&, const Tensor<double>&, const TripletBatch&, double,
                                         Tensor<double>::Array*, Tensor<double>::Array*);
template PairSample<float> pair_sample<float>(const CorrespondencePair&);
template PairSample<double> pair_sample<double>(const CorrespondencePair&);
template PairLoss pair_loss<float>(FusionModel<float>&, const PairSample<float>&, const TrainConfig&, bool,
                                   const TripletBatch*);
template PairLoss pair_loss<double>(FusionModel<double>&, const PairSample<double>&, const TrainConfig&, bool,
                                    const TripletBatch*);

StepResult train_step(FusionModel<float>& model, std::span<const CorrespondencePair> batch, const TrainConfig& cfg) {
  StepResult result;
  model.zero_grad();
  double loss_sum = 0.0;
  for (const CorrespondencePair& pair : batch) {
    const PairSample<float> sample = pair_sample<float>(pair);
    const PairLoss pl = pair_loss(model, sample, cfg, true);
    loss_sum += pl.loss_sum;
    result.triplets += pl.triplets;
    ++result.pairs;
  }
  if (result.triplets == 0) {
    result.skipped = true;
    model.zero_grad();
    return result;
  }
  result.loss = loss_sum / static_cast<double>(result.triplets);
  const float scale = 1.0f / static_cast<float>(result.triplets);
  AdamOptions opts;
  opts.learning_rate = cfg.learning_rate;
  for (auto& p : model.parameters()) {
    p.value.grad() *= scale;
    require_finite(Tensor<float>(p.value.shape(), p.value.grad()), "train_step gradient");
    adam_step(p, opts);
  }
  return result;
}

std::vector<ValidationPair> make_validation_set(std::span<const ImageRGB> images, const AugmentConfig& aug,
                                                const DetectorConfig& det, const TrainConfig& cfg) {
  const DetectorConfig d = training_detector(det, cfg);
  std::vector<ValidationPair> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    Rng rng(mix_seed(cfg.seed ^ 0x76616c6964617465ULL, i));
    ValidationPair vp;
    vp.image_a = images[i];
    vp.h_ab = sample_random_homography(aug, images[i].width(), images[i].height(), rng);
    vp.image_b = photometric_augment(warp_image(images[i], vp.h_ab).image, aug, rng);
    vp.features_a = extract_handcrafted(to_gray(vp.image_a), d);
    vp.features_b = extract_handcrafted(to_gray(vp.image_b), d);
    out.push_back(std::move(vp));
  }
  return out;
}

RowMatrix<float> describe_features(const ImageRGB& img, const HandcraftedFeatures& features,
                                   const FusionModel<float>& model) {
  const Index n = static_cast<Index>(features.keypoints.size());
  const int dim = model.config().descriptor_dim();
  if (n == 0) return RowMatrix<float>(0, dim);
  std::vector<Eigen::Vector2d> points;
  points.reserve(features.keypoints.size());
  for (const Keypoint& kp : features.keypoints) points.emplace_back(kp.x, kp.y);
  Tensor<float> y1;
  if (model.config().variant == ModelVariant::fused) {
    y1 = Tensor<float>(Shape{n, kHandcraftedDim});
    y1.matrix(n, kHandcraftedDim) = features.descriptors;
  }
  const Tensor<float> desc = model.describe(image_tensor<float>(img), points, y1);
  return desc.matrix(n, dim);
}

double validation_ms(std::span<const ValidationPair> pairs, const FusionModel<float>* model, const TrainConfig& cfg,
                     ValMethod method) {
  if (pairs.empty()) return 0.0;
  if (method == ValMethod::learned && !model) throw ConfigError("validation_ms: learned method needs a model");
  MatchOptions mo;
  mo.ratio_threshold = cfg.val_ratio_threshold;
  mo.mutual = true;
  double total = 0.0;
  for (const ValidationPair& vp : pairs) {
    RowMatrix<float> da, db;
    if (method == ValMethod::learned) {
      da = describe_features(vp.image_a, vp.features_a, *model);
      db = describe_features(vp.image_b, vp.features_b, *model);
    } else {
      da = vp.features_a.descriptors;
      db = vp.features_b.descriptors;
    }
    const auto matches = match_descriptors(da, db, mo);
    std::vector<Point2> pa, pb;
    for (const Keypoint& kp : vp.features_a.keypoints) pa.emplace_back(kp.x, kp.y);
    for (const Keypoint& kp : vp.features_b.keypoints) pb.emplace_back(kp.x, kp.y);
    total += matching_score(matches, pa, pb, vp.h_ab, cfg.val_ms_threshold, vp.image_b.width(),
                            vp.image_b.height(), cfg.keypoints_per_image);
  }
  return total / static_cast<double>(pairs.size());
}

std::string metrics_record_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss ? nlohmann::ordered_json(*r.loss) : nlohmann::ordered_json(nullptr);
  j["val_ms"] = r.val_ms ? nlohmann::ordered_json(*r.val_ms) : nlohmann::ordered_json(nullptr);
  j["wall_ms"] = r.wall_ms ? nlohmann::ordered_json(*r.wall_ms) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

MetricsRecord parse_metrics_record(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics log: ") + e.what());
  }
  if (!j.is_object() || !j.contains("step") || !j["step"].is_number_integer()) {
    throw FormatError("metrics log: record without integer 'step'");
  }
  MetricsRecord r;
  r.step = j["step"].get<int>();
  auto opt = [&j](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_number()) throw FormatError(std::string("metrics log: '") + key + "' is not a number");
    return j[key].get<double>();
  };
  r.loss = opt("loss");
  r.val_ms = opt("val_ms");
  r.wall_ms = opt("wall_ms");
  return r;
}

std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics log " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_metrics_record(line));
  }
  return out;
}

std::vector<ImageRGB> load_corpus(const std::filesystem::path& dir, const TrainConfig& cfg) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError("corpus directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("corpus directory " + dir.string() + " holds no PNG/PPM images");
  std::vector<ImageRGB> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    ImageRGB img = load_image(f);
    if (img.width() != cfg.width || img.height() != cfg.height) img = resize_bilinear(img, cfg.width, cfg.height);
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<std::pair<int, double>> convergence_curve(std::span<const MetricsRecord> records) {
  std::vector<std::pair<int, double>> out;
  for (const auto& r : records) {
    if (r.val_ms) out.emplace_back(r.step, *r.val_ms);
  }
  return out;
}

namespace {

std::string checkpoint_name(int step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06d.rft", step);
  return buf;
}

}  // namespace

TrainResult train_loop(std::span<const ImageRGB> train, std::span<const ValidationPair> val, FusionModel<float>& model,
                       const TrainConfig& cfg, const AugmentConfig& aug, const DetectorConfig& det,
                       const TrainOutput& output) {
  cfg.validate();
  aug.validate();
  det.validate();
  if (train.empty()) throw DataError("train_loop: no training images");
  const auto start = std::chrono::steady_clock::now();
  auto log = [&output](const std::string& msg) {
    if (output.log) output.log(msg);
  };
  const bool write = !output.out_dir.empty();
  std::ofstream metrics;
  if (write) {
    std::filesystem::create_directories(output.out_dir);
    metrics.open(output.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics) throw DataError("cannot write " + (output.out_dir / "metrics.jsonl").string());
  }

  TrainResult result;
  auto emit = [&](MetricsRecord r) {
    if (cfg.log_wall_time) {
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    if (write) {
      metrics << metrics_record_json(r) << '\n';
      metrics.flush();
    }
    result.records.push_back(r);
  };
  auto checkpoint = [&](int step) {
    if (!write) return;
    const auto path = output.out_dir / checkpoint_name(step);
    save_model(path, model, true);
    result.checkpoints.push_back(path);
  };

  const int n = static_cast<int>(train.size());
  const int total = cfg.total_steps(n);
  const DetectorConfig d = training_detector(det, cfg);
  std::vector<std::optional<HandcraftedFeatures>> cache(train.size());

  checkpoint(0);
  MetricsRecord first;
  first.step = 0;
  if (!val.empty()) first.val_ms = validation_ms(val, &model, cfg);
  emit(first);

  int step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int begin = 0; begin < n && step < total; begin += cfg.batch_size) {
      std::vector<CorrespondencePair> batch;
      for (int slot = begin; slot < std::min(n, begin + cfg.batch_size); ++slot) {
        const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(slot)]);
        if (!cache[idx]) cache[idx] = extract_handcrafted(to_gray(train[idx]), d);
        Rng rng(mix_seed(mix_seed(cfg.seed, 0x70616972ULL + static_cast<std::uint64_t>(epoch)),
                         static_cast<std::uint64_t>(slot)));
        auto pair = make_pair(train[idx], aug, d, cfg, rng, &*cache[idx]);
        if (pair) {
          batch.push_back(std::move(*pair));
        } else {
          ++result.skipped_samples;
          log("step " + std::to_string(step + 1) + ": image " + std::to_string(idx) + " skipped (fewer than " +
              std::to_string(cfg.min_correspondences) + " correspondences after " +
              std::to_string(cfg.max_pair_tries) + " homographies)");
        }
      }
      ++step;
      MetricsRecord rec;
      rec.step = step;
      const StepResult sr = train_step(model, batch, cfg);
      if (sr.skipped) {
        log("step " + std::to_string(step) + ": no triplets, update skipped");
      } else {
        rec.loss = sr.loss;
      }
      if (!val.empty() && step % cfg.val_interval_steps == 0) rec.val_ms = validation_ms(val, &model, cfg);
      emit(rec);
      if (step % cfg.checkpoint_interval == 0) checkpoint(step);
    }
  }
  result.steps = step;
  if (write && step > 0) {
    if (step % cfg.checkpoint_interval != 0) checkpoint(step);
    save_model(output.out_dir / "model.rft", model, false);
  }
  return result;
}

}  // namespace resfeat
