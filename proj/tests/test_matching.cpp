#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "resfeat/matching.hpp"
#include "resfeat/metrics.hpp"
#include "resfeat/ransac.hpp"
#include "resfeat/visualize.hpp"

using namespace resfeat;

namespace {

RowMatrix<float> random_unit_rows(Index n, Index d, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  RowMatrix<float> m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = g(rng);
    m.row(i).normalize();
  }
  return m;
}

// Straightforward reference: full distance table, sort each row and column.
std::vector<Match> reference_matches(const RowMatrix<float>& a, const RowMatrix<float>& b, double ratio) {
  const Index na = a.rows(), nb = b.rows();
  std::vector<std::vector<double>> d(static_cast<std::size_t>(na), std::vector<double>(static_cast<std::size_t>(nb)));
  for (Index i = 0; i < na; ++i) {
    for (Index j = 0; j < nb; ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) {
        const double t = static_cast<double>(a(i, k)) - static_cast<double>(b(j, k));
        s += t * t;
      }
      d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::sqrt(s);
    }
  }
  auto argmin_row = [&](Index i) {
    const auto& r = d[static_cast<std::size_t>(i)];
    return static_cast<Index>(std::min_element(r.begin(), r.end()) - r.begin());
  };
  auto argmin_col = [&](Index j) {
    Index best = 0;
    for (Index i = 1; i < na; ++i) {
      if (d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] <
          d[static_cast<std::size_t>(best)][static_cast<std::size_t>(j)]) {
        best = i;
      }
    }
    return best;
  };
  std::vector<Match> out;
  for (Index i = 0; i < na; ++i) {
    std::vector<double> sorted = d[static_cast<std::size_t>(i)];
    std::sort(sorted.begin(), sorted.end());
    const Index j = argmin_row(i);
    if (nb >= 2 && !(sorted[0] < ratio * sorted[1])) continue;
    if (argmin_col(j) != i) continue;
    out.push_back({i, j, sorted[0], nb >= 2 ? sorted[0] / sorted[1] : 0.0});
  }
  return out;
}

Eigen::Matrix3d test_h() {
  Eigen::Matrix3d m;
  m << 0.95, 0.08, 12.0, -0.06, 1.04, -5.0, 2e-4, -1e-4, 1.0;
  return m;
}

}  // namespace

TEST(Matcher, HandExample) {
  RowMatrix<float> a(2, 2), b(3, 2);
  a << 1, 0, 0, 1;
  b << 0, 1, 1, 0.1f, -1, 0;
  const auto m = match_descriptors(a, b);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].index_a, 0);
  EXPECT_EQ(m[0].index_b, 1);
  EXPECT_NEAR(m[0].distance, 0.1, 1e-6);
  EXPECT_EQ(m[1].index_a, 1);
  EXPECT_EQ(m[1].index_b, 0);
  EXPECT_EQ(m[1].distance, 0.0);
}

TEST(Matcher, RatioRejectsAmbiguous) {
  RowMatrix<float> a(1, 2), b(2, 2);
  a << 0, 0;
  b << 1, 0, 0, 1.02f;
  EXPECT_TRUE(match_descriptors(a, b).empty());
  MatchOptions loose;
  loose.ratio_test = false;
  EXPECT_EQ(match_descriptors(a, b, loose).size(), 1u);
}

TEST(Matcher, MutualCheck) {
  RowMatrix<float> a(2, 1), b(2, 1);
  a << 0.0f, 0.1f;
  b << 0.12f, 5.0f;
  MatchOptions opts;
  opts.ratio_test = false;
  const auto m = match_descriptors(a, b, opts);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].index_a, 1);
  opts.mutual = false;
  EXPECT_EQ(match_descriptors(a, b, opts).size(), 2u);
}

TEST(Matcher, SingleNeighbour) {
  RowMatrix<float> a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  const auto m = match_descriptors(a, b);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_DOUBLE_EQ(m[0].distance, 5.0);
  EXPECT_EQ(m[0].ratio, 0.0);
  MatchOptions strict;
  strict.reject_single_neighbor = true;
  EXPECT_TRUE(match_descriptors(a, b, strict).empty());
  EXPECT_TRUE(match_descriptors(RowMatrix<float>(0, 2), b).empty());
  EXPECT_TRUE(match_descriptors(a, RowMatrix<float>(0, 2)).empty());
  EXPECT_THROW(match_descriptors(a, RowMatrix<float>(1, 3)), DimensionError);
}

TEST(Matcher, AgreesWithReference) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const RowMatrix<float> a = random_unit_rows(90, 32, rng);
    RowMatrix<float> b = random_unit_rows(110, 32, rng);
    // Plant near-duplicates so that some matches survive the ratio test.
    for (Index i = 0; i < 40; ++i) {
      b.row(i * 2) = a.row(i) + 0.05f * random_unit_rows(1, 32, rng);
    }
    const auto got = match_descriptors(a, b);
    const auto want = reference_matches(a, b, 0.94);
    ASSERT_EQ(got.size(), want.size()) << trial;
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_EQ(got[k].index_a, want[k].index_a);
      EXPECT_EQ(got[k].index_b, want[k].index_b);
      EXPECT_NEAR(got[k].distance, want[k].distance, 1e-9);
      EXPECT_NEAR(got[k].ratio, want[k].ratio, 1e-9);
    }
  }
}

TEST(Matcher, PairwiseDistances) {
  RowMatrix<float> a(1, 2), b(2, 2);
  a << 1, 2;
  b << 1, 2, 4, 6;
  const RowMatrix<double> d = pairwise_sq_distances(a, b);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(0, 1), 25.0);
}

TEST(Dlt, ExactOnFourAndMorePoints) {
  const Homography h(test_h());
  std::vector<Point2> src{{0, 0}, {200, 10}, {190, 170}, {5, 160}, {100, 80}, {40, 120}};
  std::vector<Point2> dst;
  for (const auto& p : src) dst.push_back(h.apply(p));
  for (std::size_t n : {4u, 6u}) {
    const auto est = fit_homography_dlt(std::span(src).first(n), std::span(dst).first(n));
    ASSERT_TRUE(est.has_value());
    EXPECT_LT((est->matrix() - h.matrix()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Dlt, CollinearInputFails) {
  std::vector<Point2> src{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
  EXPECT_FALSE(fit_homography_dlt(src, src).has_value());
  const std::array<Point2, 4> deg{Point2(0, 0), Point2(10, 0), Point2(20, 0), Point2(5, 9)};
  EXPECT_TRUE(is_degenerate_sample(std::span<const Point2, 4>(deg), 1e-6));
  const std::array<Point2, 4> ok{Point2(0, 0), Point2(10, 0), Point2(10, 10), Point2(0, 10)};
  EXPECT_FALSE(is_degenerate_sample(std::span<const Point2, 4>(ok), 1e-6));
}

TEST(Ransac, RecoversWithOutliers) {
  const Homography h(test_h());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(0.0, 320.0), uy(0.0, 240.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<Point2> src, dst;
  std::vector<bool> truth;
  for (int i = 0; i < 100; ++i) {
    const Point2 p(ux(rng), uy(rng));
    src.push_back(p);
    if (i % 4 == 0) {
      dst.emplace_back(ux(rng), uy(rng));
      truth.push_back(false);
    } else {
      dst.push_back(h.apply(p) + Point2(noise(rng), noise(rng)));
      truth.push_back(true);
    }
  }
  const HomographyEstimate est = estimate_homography(src, dst);
  ASSERT_TRUE(est.success) << est.failure;
  EXPECT_LT(corner_error(*est.h, h, 320, 240), 1.0);
  EXPECT_EQ(est.inlier_mask.size(), 100u);
  int false_inliers = 0;
  for (std::size_t i = 0; i < 100; ++i) false_inliers += (est.inlier_mask[i] && !truth[i]) ? 1 : 0;
  EXPECT_LE(false_inliers, 1);
  // Same seed, same answer.
  const HomographyEstimate again = estimate_homography(src, dst);
  EXPECT_EQ(again.h->matrix(), est.h->matrix());
  EXPECT_EQ(again.inlier_mask, est.inlier_mask);
}

TEST(Ransac, TooFewPointsFails) {
  std::vector<Point2> p{{0, 0}, {1, 0}, {0, 1}};
  const HomographyEstimate est = estimate_homography(p, p);
  EXPECT_FALSE(est.success);
  EXPECT_FALSE(est.failure.empty());
  EXPECT_FALSE(est.h.has_value());
}

TEST(Ransac, SymmetricTransferError) {
  const Homography t = Homography::translation(2, 0);
  EXPECT_DOUBLE_EQ(symmetric_transfer_error(t, t.inverse(), Point2(0, 0), Point2(2, 0)), 0.0);
  EXPECT_DOUBLE_EQ(symmetric_transfer_error(t, t.inverse(), Point2(0, 0), Point2(5, 4)), 5.0);
}

TEST(Metrics, CornerErrorHandOracle) {
  const Homography gt = Homography::identity();
  EXPECT_DOUBLE_EQ(corner_error(Homography::translation(3, 4), gt, 100, 50), 5.0);
  // Scaling by 2 about the origin: corners (0,0),(99,0),(0,49),(99,49) move by 0, 99, 49, |(99,49)|.
  const double want = (0.0 + 99.0 + 49.0 + std::hypot(99.0, 49.0)) / 4.0;
  EXPECT_NEAR(corner_error(Homography::scaling(2, 2), gt, 100, 50), want, 1e-12);
}

TEST(Metrics, AccuracyMonotone) {
  const std::vector<double> errors{0.2, 0.9, 1.0, 2.5, 4.0, 7.0, std::numeric_limits<double>::infinity()};
  const std::vector<double> th{1.0, 3.0, 5.0};
  const auto acc = homography_accuracy(errors, th);
  EXPECT_DOUBLE_EQ(acc.at(1.0), 3.0 / 7.0);
  EXPECT_DOUBLE_EQ(acc.at(3.0), 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(acc.at(5.0), 5.0 / 7.0);
  EXPECT_LE(acc.at(1.0), acc.at(3.0));
  EXPECT_LE(acc.at(3.0), acc.at(5.0));
}

TEST(Metrics, MatchingScoreFixture) {
  // Five shared a-keypoints, two correct matches, one wrong, one a-point outside b.
  const Homography gt = Homography::translation(10, 0);
  const std::vector<Point2> pa{{10, 10}, {20, 20}, {30, 30}, {40, 40}, {50, 50}, {95, 50}};
  const std::vector<Point2> pb{{20, 10}, {30, 20}, {70, 70}, {50, 40}, {60, 50.5}};
  const std::vector<Match> matches{{0, 0, 0.1, 0.5}, {1, 1, 0.1, 0.5}, {2, 2, 0.1, 0.5}, {5, 4, 0.1, 0.5}};
  EXPECT_DOUBLE_EQ(matching_score(matches, pa, pb, gt, 3.0, 100, 100), 0.4);
  EXPECT_EQ(correct_match_count(matches, pa, pb, gt, 3.0, 100, 100), 2);
  EXPECT_DOUBLE_EQ(matching_score({}, pa, pb, gt, 3.0, 100, 100), 0.0);
  EXPECT_DOUBLE_EQ(matching_score(matches, pa, pb, gt, 3.0, 100, 100, 4), 0.5);
}

TEST(Metrics, Repeatability) {
  const Homography gt = Homography::identity();
  const std::vector<Point2> pa{{10, 10}, {20, 20}, {30, 30}, {40, 40}};
  const std::vector<Point2> pb{{10.5, 10}, {21, 21}, {80, 80}};
  EXPECT_DOUBLE_EQ(repeatability(pa, pb, gt, 3.0, 100, 100), 0.5);
  EXPECT_DOUBLE_EQ(repeatability(pa, {}, gt, 3.0, 100, 100), 0.0);
}

TEST(Visualize, ErrorColors) {
  const Color green = error_color(0.0);
  EXPECT_EQ(green, (Color{0.0f, 1.0f, 0.0f}));
  EXPECT_EQ(error_color(10.0), (Color{1.0f, 0.0f, 0.0f}));
  EXPECT_EQ(error_color(50.0), (Color{1.0f, 0.0f, 0.0f}));
  const Color mid = error_color(5.0);
  EXPECT_FLOAT_EQ(mid[0], 0.5f);
  EXPECT_FLOAT_EQ(mid[1], 0.5f);
}

TEST(Visualize, SideBySideCanvas) {
  const ImageRGB a(40, 30, 0.2f), b(50, 20, 0.4f);
  const std::vector<Point2> pa{{5, 5}}, pb{{10, 10}};
  const std::vector<Match> m{{0, 0, 0.0, 0.0}};
  const ImageRGB v = visualize_matches(a, b, m, pa, pb, Homography::translation(5, 5));
  EXPECT_EQ(v.width(), 90);
  EXPECT_EQ(v.height(), 30);
  // The correct match is drawn in green from (5,5) to (50,10).
  EXPECT_FLOAT_EQ(v.data[1](5, 5), 1.0f);
  EXPECT_FLOAT_EQ(v.data[0](5, 5), 0.0f);
  EXPECT_FLOAT_EQ(v.data[0](25, 60), 0.0f);  // below b's rows stays background
  EXPECT_FLOAT_EQ(v.data[0](15, 80), 0.4f);  // untouched b pixel
}

TEST(Visualize, PlotCurvesSize) {
  const ImageRGB p = plot_curves({{{0, 0.1}, {100, 0.5}}, {{0, 0.2}, {50, 0.3}}}, 320, 200);
  EXPECT_EQ(p.width(), 320);
  EXPECT_EQ(p.height(), 200);
  EXPECT_NE(series_color(0), series_color(1));
}
