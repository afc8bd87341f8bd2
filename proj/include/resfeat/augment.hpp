#pragma once

#include <random>
#include <utility>

#include "resfeat/homography.hpp"
#include "resfeat/image.hpp"

namespace resfeat {

using Rng = std::mt19937_64;

struct AugmentConfig {
  // Photometric.
  double noise_sigma = 0.02;
  double brightness_delta = 0.2;
  std::pair<double, double> contrast_range{0.7, 1.3};
  std::pair<double, double> saturation_range{0.7, 1.3};
  double hue_delta = 0.1;  // radians
  // Geometric. Scale is drawn from [1 - max_scale_change, 1 + max_scale_change].
  double max_scale_change = 0.2;
  double max_rotation = 25.0 * 3.14159265358979323846 / 180.0;
  double max_translation = 0.1;    // fraction of width / height
  double max_perspective = 0.001;  // per pixel
  double min_coverage = 0.25;

  /// Config with every magnitude zero: identity warps, unchanged pixels.
  static AugmentConfig none();
  void validate() const;
};

template <typename Image>
struct WarpResult {
  Image image;
  Plane valid;  // 1 where the source pixel was inside the input, else 0
};

/// Inverse warping with bilinear sampling; pixels whose preimage falls
/// outside the source are 0 and flagged invalid.
WarpResult<ImageRGB> warp_image(const ImageRGB& img, const Homography& h);
WarpResult<ImageGray> warp_image(const ImageGray& img, const Homography& h);

/// Fraction of a regular grid over the source frame that `h` keeps inside
/// the destination frame (0 when any corner crosses the line at infinity).
double frame_coverage(const Homography& h, Index width, Index height);

/// H = C^-1 * perspective * rotation * scale * translation * C, with C moving
/// the image center to the origin. Rejection-samples until the coverage
/// constraint holds; throws ConfigError after 100 failed draws.
Homography sample_random_homography(const AugmentConfig& cfg, Index width, Index height, Rng& rng);

struct PhotometricParams {
  double brightness = 0.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;  // radians
  double noise_sigma = 0.0;
};

PhotometricParams sample_photometric(const AugmentConfig& cfg, Rng& rng);

/// Brightness, contrast, saturation, hue, then Gaussian noise, clamping to
/// [0, 1] after each stage. `rng` is consumed only for the noise stage.
ImageRGB apply_photometric(const ImageRGB& img, const PhotometricParams& params, Rng& rng);

ImageRGB photometric_augment(const ImageRGB& img, const AugmentConfig& cfg, Rng& rng);

}  // namespace resfeat
