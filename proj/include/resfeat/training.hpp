#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resfeat/augment.hpp"
#include "resfeat/model.hpp"
#include "resfeat/optim.hpp"
#include "resfeat/sift.hpp"

namespace resfeat {

struct TrainConfig {
  int batch_size = 4;
  double learning_rate = 1e-3;
  int epochs = 2;
  /// When > 0 training runs exactly this many steps, cycling through epochs.
  int max_steps = 0;
  double margin = 2.0;
  double negative_min_distance_px = 8.0;
  int val_interval_steps = 100;
  int checkpoint_interval = 500;
  std::uint64_t seed = 0;
  /// Corpus images are resized to width x height before use.
  int width = 320;
  int height = 240;
  /// The last `val_images` corpus files (sorted by name) form the validation split.
  int val_images = 20;
  int keypoints_per_image = 300;
  int min_correspondences = 16;
  int max_pair_tries = 10;
  double border_margin = 8.0;
  double val_ratio_threshold = 0.94;
  double val_ms_threshold = 3.0;
  bool log_wall_time = false;

  void validate() const;
  int steps_per_epoch(int n_train) const;
  int total_steps(int n_train) const;
};

/// Image pair related by a known homography, with keypoints of a and their
/// images in b. Row i of y1_a / y1_b and entry i of points_b belong to
/// keypoints_a[i].
struct CorrespondencePair {
  ImageRGB image_a;
  ImageRGB image_b;
  Homography h_ab;
  std::vector<Keypoint> keypoints_a;
  std::vector<Index> source_index;  // index into the full detection list of a
  std::vector<Point2> points_b;
  RowMatrix<float> y1_a;
  RowMatrix<float> y1_b;

  Index size() const { return static_cast<Index>(points_b.size()); }
};

/// Samples a homography, warps and photometrically augments `img` into b,
/// maps keypoints of a and describes them in b. Resamples up to
/// cfg.max_pair_tries times; nullopt when too few correspondences survive.
/// `features_a` may carry a precomputed detection on to_gray(img).
std::optional<CorrespondencePair> make_pair(const ImageRGB& img, const AugmentConfig& aug,
                                            const DetectorConfig& det, const TrainConfig& cfg, Rng& rng,
                                            const HandcraftedFeatures* features_a = nullptr);

/// Pair built from an explicit homography (no resampling, no photometric change).
CorrespondencePair make_pair_with(const ImageRGB& img, const Homography& h, const DetectorConfig& det,
                                  const TrainConfig& cfg);

double triplet_loss(double d_ap, double d_an, double margin);

struct Triplet {
  Index anchor = 0;    // row in desc_a
  Index positive = 0;  // row in desc_b (the true correspondent)
  Index negative = 0;  // row in desc_b
};
using TripletBatch = std::vector<Triplet>;

/// Hardest negative per anchor among b-points at least `min_distance_px`
/// from the anchor's true correspondent (ties to the lower index).
TripletBatch mine_triplets(const RowMatrix<double>& desc_a, const RowMatrix<double>& desc_b,
                           std::span<const Point2> points_b, double min_distance_px);

/// Sum of hinge losses; accumulates d(sum)/d(desc) into grad_a/grad_b when given.
template <typename Scalar>
double triplet_loss_sum(const Tensor<Scalar>& desc_a, const Tensor<Scalar>& desc_b, const TripletBatch& batch,
                        double margin, typename Tensor<Scalar>::Array* grad_a,
                        typename Tensor<Scalar>::Array* grad_b);

template <typename Scalar>
struct PairSample {
  Tensor<Scalar> image_a;
  Tensor<Scalar> image_b;
  std::vector<Eigen::Vector2d> points_a;
  std::vector<Eigen::Vector2d> points_b;
  Tensor<Scalar> y1_a;
  Tensor<Scalar> y1_b;
};

template <typename Scalar>
PairSample<Scalar> pair_sample(const CorrespondencePair& pair);

struct PairLoss {
  double loss_sum = 0.0;
  Index triplets = 0;
  TripletBatch batch;
};

/// Forward both images, mine (or reuse `fixed`) triplets and sum the loss.
/// With backward set, parameter gradients of the summed loss are accumulated.
template <typename Scalar>
PairLoss pair_loss(FusionModel<Scalar>& model, const PairSample<Scalar>& sample, const TrainConfig& cfg,
                   bool backward, const TripletBatch* fixed = nullptr);

struct StepResult {
  double loss = 0.0;  // mean over triplets, before the update
  Index triplets = 0;
  int pairs = 0;
  bool skipped = false;  // no triplet in the whole batch
};

/// One optimization step over a batch: the loss is the triplet mean, its
/// gradient drives one ADAM update of every parameter.
StepResult train_step(FusionModel<float>& model, std::span<const CorrespondencePair> batch, const TrainConfig& cfg);

struct ValidationPair {
  ImageRGB image_a;
  ImageRGB image_b;
  Homography h_ab;
  HandcraftedFeatures features_a;
  HandcraftedFeatures features_b;
};

/// Fixed validation pairs: one seeded homography + photometric change per image.
std::vector<ValidationPair> make_validation_set(std::span<const ImageRGB> images, const AugmentConfig& aug,
                                                const DetectorConfig& det, const TrainConfig& cfg);

/// Descriptors of a detection for the given image under `model`.
RowMatrix<float> describe_features(const ImageRGB& img, const HandcraftedFeatures& features,
                                   const FusionModel<float>& model);

enum class ValMethod { learned, handcrafted };

/// Mean matching score over the validation pairs (ratio test + mutual check).
double validation_ms(std::span<const ValidationPair> pairs, const FusionModel<float>* model, const TrainConfig& cfg,
                     ValMethod method = ValMethod::learned);

struct MetricsRecord {
  int step = 0;
  std::optional<double> loss;
  std::optional<double> val_ms;
  std::optional<double> wall_ms;
};

std::string metrics_record_json(const MetricsRecord& r);
MetricsRecord parse_metrics_record(const std::string& line);
std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path);

struct TrainOutput {
  /// Empty: no files are written.
  std::filesystem::path out_dir;
  std::function<void(const std::string&)> log;  // diagnostics (skipped samples etc.)
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  int steps = 0;
  int skipped_samples = 0;
  std::vector<std::filesystem::path> checkpoints;
};

/// Corpus images (PNG/PPM, non-recursive, sorted by file name) resized to cfg.width x cfg.height.
std::vector<ImageRGB> load_corpus(const std::filesystem::path& dir, const TrainConfig& cfg);

/// Seeded epochs over `train`, validation every val_interval_steps (step 0
/// included), checkpoints at step 0, every checkpoint_interval steps and at
/// the end, metrics.jsonl in out_dir.
TrainResult train_loop(std::span<const ImageRGB> train, std::span<const ValidationPair> val,
                       FusionModel<float>& model, const TrainConfig& cfg, const AugmentConfig& aug,
                       const DetectorConfig& det, const TrainOutput& output = {});

/// (step, val_ms) entries of a log.
std::vector<std::pair<int, double>> convergence_curve(std::span<const MetricsRecord> records);

/// Stateless 64-bit mixer used to derive per-sample seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace resfeat
