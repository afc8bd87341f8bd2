#include "resfeat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace resfeat {

namespace {

std::optional<Point2> try_apply(const Homography& h, const Point2& p) {
  const Eigen::Vector3d q = h.matrix() * p.homogeneous();
  if (!(std::abs(q.z()) > 1e-12)) return std::nullopt;
  return Point2(q.hnormalized());
}

}  // namespace

bool inside_frame(const Point2& p, Index width, Index height, double margin) {
  return p.x() >= margin && p.y() >= margin && p.x() <= static_cast<double>(width - 1) - margin &&
         p.y() <= static_cast<double>(height - 1) - margin;
}

double corner_error(const Homography& h_est, const Homography& h_gt, Index width, Index height) {
  const double w = static_cast<double>(width - 1), h = static_cast<double>(height - 1);
  const Point2 corners[4] = {{0.0, 0.0}, {w, 0.0}, {0.0, h}, {w, h}};
  double sum = 0.0;
  for (const Point2& c : corners) {
    const auto a = try_apply(h_est, c);
    const auto b = try_apply(h_gt, c);
    if (!a || !b) return std::numeric_limits<double>::infinity();
    sum += (*a - *b).norm();
  }
  return sum / 4.0;
}

std::map<double, double> homography_accuracy(std::span<const double> errors, std::span<const double> thresholds) {
  std::map<double, double> out;
  for (double t : thresholds) {
    if (errors.empty()) {
      out[t] = 0.0;
      continue;
    }
    const auto hits = std::count_if(errors.begin(), errors.end(), [t](double e) { return e <= t; });
    out[t] = static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  return out;
}

Index correct_match_count(const std::vector<Match>& matches, std::span<const Point2> points_a,
                          std::span<const Point2> points_b, const Homography& h_gt, double threshold,
                          Index width_b, Index height_b) {
  Index correct = 0;
  for (const Match& m : matches) {
    const auto mapped = try_apply(h_gt, points_a[static_cast<std::size_t>(m.index_a)]);
    if (!mapped || !inside_frame(*mapped, width_b, height_b)) continue;
    if ((*mapped - points_b[static_cast<std::size_t>(m.index_b)]).norm() < threshold) ++correct;
  }
  return correct;
}

double matching_score(const std::vector<Match>& matches, std::span<const Point2> points_a,
                      std::span<const Point2> points_b, const Homography& h_gt, double threshold,
                      Index width_b, Index height_b, Index budget) {
  Index shared = 0;
  for (const Point2& p : points_a) {
    const auto mapped = try_apply(h_gt, p);
    if (mapped && inside_frame(*mapped, width_b, height_b)) ++shared;
  }
  if (budget > 0) shared = std::min(shared, budget);
  if (shared == 0) return 0.0;
  const Index correct = correct_match_count(matches, points_a, points_b, h_gt, threshold, width_b, height_b);
  return std::min(1.0, static_cast<double>(correct) / static_cast<double>(shared));
}

double repeatability(std::span<const Point2> points_a, std::span<const Point2> points_b, const Homography& h_gt,
                     double threshold, Index width_b, Index height_b) {
  Index visible = 0, repeated = 0;
  for (const Point2& p : points_a) {
    const auto mapped = try_apply(h_gt, p);
    if (!mapped || !inside_frame(*mapped, width_b, height_b)) continue;
    ++visible;
    for (const Point2& q : points_b) {
      if ((*mapped - q).norm() <= threshold) {
        ++repeated;
        break;
      }
    }
  }
  return visible == 0 ? 0.0 : static_cast<double>(repeated) / static_cast<double>(visible);
}

}  // namespace resfeat
