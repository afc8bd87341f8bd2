#include "resfeat/ransac.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "resfeat/error.hpp"

namespace resfeat {

Index HomographyEstimate::inlier_count() const {
  return static_cast<Index>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

namespace {

constexpr double kRankTolerance = 1e-9;

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
std::optional<Eigen::Matrix3d> hartley_transform(std::span<const Point2> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  if (!(dist > 1e-12)) return std::nullopt;
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = s;
  t(1, 1) = s;
  t(0, 2) = -s * mean.x();
  t(1, 2) = -s * mean.y();
  return t;
}

}  // namespace

std::optional<Homography> fit_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) throw DimensionError("fit_homography_dlt: point counts differ");
  const std::size_t n = src.size();
  if (n < 4) return std::nullopt;
  const auto ts = hartley_transform(src);
  const auto td = hartley_transform(dst);
  if (!ts || !td) return std::nullopt;

  Eigen::MatrixXd a(static_cast<Index>(2 * n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = *ts * src[i].homogeneous();
    const Eigen::Vector3d q = *td * dst[i].homogeneous();
    const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
    const auto r = static_cast<Index>(2 * i);
    a.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  // A unique solution needs rank 8; collinear or repeated points leave a
  // larger null space.
  const Eigen::VectorXd& sv = svd.singularValues();
  if (!(sv(7) > kRankTolerance * sv(0))) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d m = td->inverse() * hn * *ts;
  if (!m.allFinite() || std::abs(m(2, 2)) < 1e-15 * m.cwiseAbs().maxCoeff()) return std::nullopt;
  try {
    Homography h(m);
    (void)h.inverse();  // both directions are needed for the transfer error
    return h;
  } catch (const GeometryError&) {
    return std::nullopt;
  }
}

bool is_degenerate_sample(std::span<const Point2, 4> pts, double tolerance) {
  const auto t = hartley_transform(std::span<const Point2>(pts.data(), 4));
  if (!t) return true;
  std::array<Eigen::Vector2d, 4> q;
  for (int i = 0; i < 4; ++i) q[static_cast<std::size_t>(i)] = (*t * pts[static_cast<std::size_t>(i)].homogeneous()).head<2>();
  static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& tri : kTriples) {
    const Eigen::Vector2d u = q[static_cast<std::size_t>(tri[1])] - q[static_cast<std::size_t>(tri[0])];
    const Eigen::Vector2d v = q[static_cast<std::size_t>(tri[2])] - q[static_cast<std::size_t>(tri[0])];
    const double nu = u.norm(), nv = v.norm();
    if (nu < 1e-12 || nv < 1e-12) return true;
    const double cross = u.x() * v.y() - u.y() * v.x();
    if (std::abs(cross) / (nu * nv) < tolerance) return true;
  }
  return false;
}

double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Point2& src,
                                const Point2& dst) {
  const Eigen::Vector3d f = h.matrix() * src.homogeneous();
  const Eigen::Vector3d b = h_inv.matrix() * dst.homogeneous();
  if (std::abs(f.z()) < 1e-12 || std::abs(b.z()) < 1e-12) return std::numeric_limits<double>::infinity();
  return 0.5 * ((f.hnormalized() - dst).norm() + (b.hnormalized() - src).norm());
}

namespace {


Index count_inliers(const Homography& h, std::span<const Point2> src, std::span<const Point2> dst,
                    double threshold, std::vector<bool>* mask) {
  const Homography inv = h.inverse();
  Index n = 0;
  if (mask) mask->assign(src.size(), false);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (symmetric_transfer_error(h, inv, src[i], dst[i]) < threshold) {
      ++n;
      if (mask) (*mask)[i] = true;
    }
  }
  return n;
}

}  // namespace

HomographyEstimate estimate_homography(std::span<const Point2> src, std::span<const Point2> dst,
                                       const RansacOptions& options) {
  if (src.size() != dst.size()) throw DimensionError("estimate_homography: point counts differ");
  HomographyEstimate est;
  est.inlier_threshold = options.inlier_threshold;
  est.inlier_mask.assign(src.size(), false);
  const std::size_t n = src.size();
  if (n < 4) {
    est.failure = "fewer than 4 correspondences";
    return est;
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::optional<Homography> best;
  Index best_count = 0;
  double needed = static_cast<double>(options.max_iterations);
  int it = 0;
  for (; it < options.max_iterations && it < static_cast<int>(std::ceil(needed)); ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      std::size_t c;
      do {
        c = pick(rng);
      } while (std::find(idx.begin(), idx.begin() + k, c) != idx.begin() + k);
      idx[static_cast<std::size_t>(k)] = c;
    }
    std::array<Point2, 4> s, d;
    for (int k = 0; k < 4; ++k) {
      s[static_cast<std::size_t>(k)] = src[idx[static_cast<std::size_t>(k)]];
      d[static_cast<std::size_t>(k)] = dst[idx[static_cast<std::size_t>(k)]];
    }
    if (is_degenerate_sample(s, options.collinearity_tolerance) ||
        is_degenerate_sample(d, options.collinearity_tolerance)) {
      continue;
    }
    const auto h = fit_homography_dlt(s, d);
    if (!h) continue;
    const Index count = count_inliers(*h, src, dst, options.inlier_threshold, nullptr);
    if (count > best_count) {
      best_count = count;
      best = h;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_fail = 1.0 - std::pow(w, 4);
      if (p_fail <= 0.0) {
        needed = 0.0;
      } else if (p_fail < 1.0) {
        needed = std::min(needed, std::log(1.0 - options.confidence) / std::log(p_fail));
      }
    }
  }
  est.iterations = it;
  if (!best || best_count < 4) {
    est.failure = "no model with at least 4 inliers";
    return est;
  }

  // Local optimization: refit on inliers under a shrinking threshold
  // (8, 4, 2 times the inlier threshold).
  Homography final_h = *best;
  std::vector<bool> mask;
  count_inliers(final_h, src, dst, options.inlier_threshold, &mask);
  auto refit_at = [&](const Homography& h, double threshold) -> std::optional<Homography> {
    std::vector<bool> m;
    if (count_inliers(h, src, dst, threshold, &m) < 4) return std::nullopt;
    std::vector<Point2> in_src, in_dst;
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i]) {
        in_src.push_back(src[i]);
        in_dst.push_back(dst[i]);
      }
    }
    return fit_homography_dlt(in_src, in_dst);
  };
  std::optional<Homography> local = final_h;
  for (double factor : {8.0, 4.0, 2.0}) {
    if (const auto h = refit_at(*local, factor * options.inlier_threshold)) local = h;
  }
  // One final fit on the inliers of the 2x model. Iterating at the threshold
  // itself drifts toward a self-consistent subset when the threshold is below
  // the noise level.
  if (const auto refit = refit_at(*local, options.inlier_threshold)) {
    std::vector<bool> refit_mask;
    if (count_inliers(*refit, src, dst, options.inlier_threshold, &refit_mask) >= 4) {
      final_h = *refit;
      mask = std::move(refit_mask);
    }
  }
  est.success = true;
  est.h = final_h;
  est.inlier_mask = std::move(mask);
  return est;
}

HomographyEstimate estimate_homography(const std::vector<Match>& matches, std::span<const Point2> points_a,
                                       std::span<const Point2> points_b, const RansacOptions& options) {
  std::vector<Point2> src, dst;
  src.reserve(matches.size());
  dst.reserve(matches.size());
  for (const Match& m : matches) {
    src.push_back(points_a[static_cast<std::size_t>(m.index_a)]);
    dst.push_back(points_b[static_cast<std::size_t>(m.index_b)]);
  }
  return estimate_homography(src, dst, options);
}

}  // namespace resfeat
