#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resfeat/homography.hpp"
#include "resfeat/matching.hpp"

namespace resfeat {

struct RansacOptions {
  double inlier_threshold = 0.5;  // px, symmetric transfer error
  int max_iterations = 5000;
  double confidence = 0.9999;
  std::uint64_t seed = 0;
  double collinearity_tolerance = 1e-6;
};

struct HomographyEstimate {
  bool success = false;
  std::optional<Homography> h;
  std::vector<bool> inlier_mask;  // one entry per correspondence
  int iterations = 0;
  double inlier_threshold = 0.0;
  std::string failure;  // empty on success

  Index inlier_count() const;
};

/// Hartley-normalized DLT from >= 4 correspondences (least squares via SVD).
/// nullopt for degenerate input.
std::optional<Homography> fit_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst);

/// True when any 3 of the 4 points are collinear after Hartley normalization
/// (|sin| of the spanned angle below `tolerance`).
bool is_degenerate_sample(std::span<const Point2, 4> pts, double tolerance);

/// Mean of the forward and backward transfer distances; +inf when a point
/// maps to infinity.
double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Point2& src,
                                const Point2& dst);

/// RANSAC over 4-point samples with adaptive iteration count. The best
/// sample model is refit on its inliers at 8, 4 and 2 times the threshold;
/// the final H is the DLT fit on all inliers of that model at the threshold.
HomographyEstimate estimate_homography(std::span<const Point2> src, std::span<const Point2> dst,
                                       const RansacOptions& options = {});

HomographyEstimate estimate_homography(const std::vector<Match>& matches, std::span<const Point2> points_a,
                                       std::span<const Point2> points_b, const RansacOptions& options = {});

}  // namespace resfeat
