#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "resfeat/homography.hpp"
#include "resfeat/image.hpp"

namespace resfeat {

/// Detected interest point in image coordinates (pixel centers on integers).
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double sigma = 1.0;        // characteristic scale, pixels
  double orientation = 0.0;  // radians in [0, 2 pi), angle of the dominant gradient
  double response = 0.0;     // |DoG contrast| * scales_per_octave
  // Scale-space cell the point was refined in; not serialized.
  int octave = 0;
  int layer = 0;
};

inline constexpr int kHandcraftedDim = 128;
using HandcraftedDescriptor = Eigen::Matrix<float, kHandcraftedDim, 1>;

struct DetectorConfig {
  int n_octaves = 4;
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double assumed_blur = 0.5;  // blur already present in the input
  /// Rejects extrema with |D(x^)| * scales_per_octave below this value.
  double contrast_threshold = 0.04;
  double edge_threshold = 10.0;
  bool upright = false;
  bool rootsift = true;
  int max_keypoints = 4096;
  double border_margin = 8.0;  // px, image frame

  /// Lowered contrast threshold for dense detection.
  static DetectorConfig low_recall();
  void validate() const;
};

struct ScaleSpace {
  struct Octave {
    std::vector<Plane> gaussians;  // scales_per_octave + 3 levels
    std::vector<Plane> dogs;       // scales_per_octave + 2 levels
  };
  std::vector<Octave> octaves;
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  Index width = 0;
  Index height = 0;

  /// Blur of Gaussian level `layer`, in octave pixels.
  double level_sigma(double layer) const;
};

/// Gaussian and DoG pyramids. Requires min(W, H) >= 32; octaves whose
/// smaller side would drop below 8 px are not built.
ScaleSpace build_scale_space(const ImageGray& img, const DetectorConfig& cfg);

/// 3x3x3 DoG extrema refined to sub-pixel/sub-scale, filtered by contrast and
/// edge response, sorted by response (descending). Orientation is left at 0.
std::vector<Keypoint> detect_keypoints(const ScaleSpace& space, const DetectorConfig& cfg);

/// Dominant gradient orientations around (x, y) of one Gaussian level, all in
/// octave pixels: 36-bin histogram, Gaussian window 1.5 * scale, peaks within
/// 80% of the maximum. Empty when the window has no gradient.
std::vector<double> dominant_orientations(const Plane& level, double x, double y, double scale);

/// Oriented copies of `kp` (exactly one with orientation 0 in upright mode).
std::vector<Keypoint> assign_orientation(const Keypoint& kp, const ScaleSpace& space,
                                         const DetectorConfig& cfg);

/// 4x4 cells x 8 bins gradient histogram, L2-normalized, clamped at 0.2 and
/// renormalized. Arguments in octave pixels. nullopt when no gradient falls
/// into the window.
std::optional<HandcraftedDescriptor> gradient_histogram_descriptor(const Plane& level, double x,
                                                                   double y, double scale,
                                                                   double angle);

std::optional<HandcraftedDescriptor> compute_descriptor(const Keypoint& kp, const ScaleSpace& space);

/// sqrt(d / ||d||_1). Throws ConfigError for a zero vector or negative entries.
HandcraftedDescriptor rootsift(const HandcraftedDescriptor& desc);

struct HandcraftedFeatures {
  std::vector<Keypoint> keypoints;
  RowMatrix<float> descriptors;  // N x 128
};

/// Full pipeline: scale space, detection, orientation, description, RootSIFT
/// (unless disabled), border filtering and truncation to max_keypoints.
HandcraftedFeatures extract_handcrafted(const ImageGray& img, const DetectorConfig& cfg);

/// Descriptor of an arbitrary location/scale/orientation (image frame) on an
/// existing scale space, with the same normalization as extract_handcrafted.
std::optional<HandcraftedDescriptor> describe_at(const ScaleSpace& space, const Point2& p,
                                                 double sigma, double orientation,
                                                 const DetectorConfig& cfg);

}  // namespace resfeat
