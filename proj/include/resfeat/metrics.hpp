#pragma once

#include <map>
#include <span>
#include <vector>

#include "resfeat/homography.hpp"
#include "resfeat/matching.hpp"

namespace resfeat {

/// Mean distance between the four image corners mapped by `h_est` and by
/// `h_gt`; +inf when either maps a corner to infinity.
double corner_error(const Homography& h_est, const Homography& h_gt, Index width, Index height);

/// Fraction of errors <= each threshold.
std::map<double, double> homography_accuracy(std::span<const double> errors,
                                             std::span<const double> thresholds);

inline constexpr double kCorThresholds[] = {1.0, 3.0, 5.0};

/// Correct matches (|H_gt(a) - b| < threshold, a in the shared region) over
/// the number of a-keypoints whose H_gt image falls inside b, capped by
/// `budget` (budget <= 0 disables the cap). 0 when no keypoint is shared.
double matching_score(const std::vector<Match>& matches, std::span<const Point2> points_a,
                      std::span<const Point2> points_b, const Homography& h_gt, double threshold,
                      Index width_b, Index height_b, Index budget = 0);

/// Count of correct matches under the same rule.
Index correct_match_count(const std::vector<Match>& matches, std::span<const Point2> points_a,
                          std::span<const Point2> points_b, const Homography& h_gt, double threshold,
                          Index width_b, Index height_b);

/// Fraction of a-keypoints mapped inside b that have a b-keypoint within
/// `threshold` px of their mapped location.
double repeatability(std::span<const Point2> points_a, std::span<const Point2> points_b, const Homography& h_gt,
                     double threshold, Index width_b, Index height_b);

/// `p` lies in [0, width - 1] x [0, height - 1].
bool inside_frame(const Point2& p, Index width, Index height, double margin = 0.0);

}  // namespace resfeat
