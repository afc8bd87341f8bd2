#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "resfeat/image.hpp"
#include "resfeat/sift.hpp"
#include "resfeat/synthetic.hpp"

using namespace resfeat;

namespace {

ImageGray crop(const ImageGray& img, Index x0, Index y0, Index w, Index h) {
  return ImageGray(Plane(img.data.block(y0, x0, h, w)));
}

ImageGray blob_image(Index size, double cx, double cy, double s) {
  ImageGray img(size, size, 0.2f);
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img(x, y) += static_cast<float>(0.6 * std::exp(-r2 / (2.0 * s * s)));
    }
  }
  return img;
}

double angle_diff(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

}  // namespace

TEST(ScaleSpace, PyramidSizes) {
  const ImageGray img = to_gray(synthetic_texture(320, 240, 1));
  DetectorConfig cfg;
  const ScaleSpace space = build_scale_space(img, cfg);
  ASSERT_EQ(space.octaves.size(), 4u);
  Index w = 320, h = 240;
  for (const auto& oct : space.octaves) {
    ASSERT_EQ(oct.gaussians.size(), static_cast<std::size_t>(cfg.scales_per_octave + 3));
    ASSERT_EQ(oct.dogs.size(), static_cast<std::size_t>(cfg.scales_per_octave + 2));
    EXPECT_EQ(oct.gaussians[0].cols(), w);
    EXPECT_EQ(oct.gaussians[0].rows(), h);
    EXPECT_EQ(oct.dogs[0].cols(), w);
    w = (w + 1) / 2;
    h = (h + 1) / 2;
  }
  EXPECT_DOUBLE_EQ(space.level_sigma(0), 1.6);
  EXPECT_NEAR(space.level_sigma(3), 3.2, 1e-12);
}

TEST(ScaleSpace, RejectsTinyImage) {
  EXPECT_THROW(build_scale_space(ImageGray(31, 64), DetectorConfig{}), DataError);
}

TEST(Detector, ConstantImageHasNoKeypoints) {
  const auto f = extract_handcrafted(ImageGray(96, 80, 0.5f), DetectorConfig{});
  EXPECT_TRUE(f.keypoints.empty());
  EXPECT_EQ(f.descriptors.rows(), 0);
}

TEST(Detector, SingleBlobLocationAndScale) {
  // The scale-normalized Laplacian of a Gaussian blob of width s peaks at sigma = s.
  for (double s : {3.0, 5.0}) {
    const ImageGray img = blob_image(96, 47.3, 50.6, s);
    DetectorConfig cfg;
    cfg.upright = true;
    const auto f = extract_handcrafted(img, cfg);
    ASSERT_FALSE(f.keypoints.empty()) << "s=" << s;
    const Keypoint& kp = f.keypoints.front();
    EXPECT_NEAR(kp.x, 47.3, 0.5) << "s=" << s;
    EXPECT_NEAR(kp.y, 50.6, 0.5) << "s=" << s;
    EXPECT_NEAR(kp.sigma / s, 1.0, 0.25) << "s=" << s;
  }
}

TEST(Detector, TranslationEquivariance) {
  // Shifts by a multiple of the coarsest octave step keep every pyramid grid aligned.
  const ImageGray big = to_gray(synthetic_texture(200, 160, 21));
  const Index shift = 8;
  const ImageGray a = crop(big, 0, 0, 160, 128);
  const ImageGray b = crop(big, shift, 0, 160, 128);
  DetectorConfig cfg;
  cfg.upright = true;
  const auto fa = extract_handcrafted(a, cfg);
  const auto fb = extract_handcrafted(b, cfg);
  int interior = 0, found = 0;
  for (const Keypoint& ka : fa.keypoints) {
    // Far enough from both frames that border reflection does not reach the support.
    if (ka.x - shift < 40 || ka.x > 159 - 40 || ka.y < 30 || ka.y > 127 - 30) continue;
    ++interior;
    for (const Keypoint& kb : fb.keypoints) {
      if (std::abs(kb.x - (ka.x - shift)) < 1e-3 && std::abs(kb.y - ka.y) < 1e-3 &&
          std::abs(kb.sigma - ka.sigma) < 1e-3) {
        ++found;
        break;
      }
    }
  }
  ASSERT_GT(interior, 5);
  EXPECT_GE(found, interior * 9 / 10) << found << " of " << interior;
}

TEST(Orientation, RampDirection) {
  for (double theta_deg : {0.0, 30.0, 135.0, 200.0, 310.0}) {
    const double theta = theta_deg * std::numbers::pi / 180.0;
    Plane ramp(64, 64);
    for (Index y = 0; y < 64; ++y) {
      for (Index x = 0; x < 64; ++x) {
        ramp(y, x) = static_cast<float>(0.5 + 0.005 * (x * std::cos(theta) + y * std::sin(theta)));
      }
    }
    const auto peaks = dominant_orientations(ramp, 32.0, 32.0, 2.0);
    ASSERT_FALSE(peaks.empty());
    EXPECT_LT(angle_diff(peaks.front(), theta), 5.0 * std::numbers::pi / 180.0) << theta_deg;
  }
  EXPECT_TRUE(dominant_orientations(Plane::Constant(64, 64, 0.3f), 32.0, 32.0, 2.0).empty());
}

TEST(Orientation, UprightGivesZero) {
  DetectorConfig cfg;
  cfg.upright = true;
  const auto f = extract_handcrafted(to_gray(synthetic_texture(128, 96, 5)), cfg);
  ASSERT_FALSE(f.keypoints.empty());
  for (const Keypoint& kp : f.keypoints) EXPECT_EQ(kp.orientation, 0.0);
}

TEST(RootSift, Examples) {
  HandcraftedDescriptor d = HandcraftedDescriptor::Zero();
  d(0) = 4.0f;
  HandcraftedDescriptor r = rootsift(d);
  EXPECT_FLOAT_EQ(r(0), 1.0f);
  EXPECT_FLOAT_EQ(r.tail(127).cwiseAbs().maxCoeff(), 0.0f);

  d = HandcraftedDescriptor::Zero();
  d.head(4).setConstant(0.3f);
  r = rootsift(d);
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(r(i), 0.5f);
  EXPECT_NEAR(r.norm(), 1.0, 1e-6);

  EXPECT_THROW(rootsift(HandcraftedDescriptor::Zero()), ConfigError);
  d(5) = -0.1f;
  EXPECT_THROW(rootsift(d), ConfigError);
}

TEST(Descriptor, UnitNormAndNonNegative) {
  const auto f = extract_handcrafted(to_gray(synthetic_texture(160, 120, 9)), DetectorConfig{});
  ASSERT_GT(f.descriptors.rows(), 10);
  ASSERT_EQ(f.descriptors.cols(), kHandcraftedDim);
  for (Index i = 0; i < f.descriptors.rows(); ++i) {
    EXPECT_NEAR(f.descriptors.row(i).norm(), 1.0, 1e-5);
    EXPECT_GE(f.descriptors.row(i).minCoeff(), 0.0f);
  }
}

TEST(Descriptor, PlainSiftIsUnitNorm) {
  DetectorConfig cfg;
  cfg.rootsift = false;
  const auto f = extract_handcrafted(to_gray(synthetic_texture(160, 120, 9)), cfg);
  ASSERT_GT(f.descriptors.rows(), 0);
  for (Index i = 0; i < f.descriptors.rows(); ++i) {
    EXPECT_NEAR(f.descriptors.row(i).norm(), 1.0, 1e-5);
    EXPECT_GE(f.descriptors.row(i).minCoeff(), 0.0f);
  }
}

TEST(Detector, BudgetAndResponseOrder) {
  const ImageGray img = to_gray(synthetic_texture(320, 240, 2));
  DetectorConfig cfg;
  cfg.max_keypoints = 25;
  const auto f = extract_handcrafted(img, cfg);
  EXPECT_EQ(f.keypoints.size(), 25u);
  for (std::size_t i = 1; i < f.keypoints.size(); ++i) {
    EXPECT_LE(f.keypoints[i].response, f.keypoints[i - 1].response);
  }
  for (const Keypoint& kp : f.keypoints) {
    EXPECT_GE(kp.x, cfg.border_margin);
    EXPECT_GE(kp.y, cfg.border_margin);
    EXPECT_LE(kp.x, 319 - cfg.border_margin);
    EXPECT_LE(kp.y, 239 - cfg.border_margin);
    EXPECT_GE(kp.orientation, 0.0);
    EXPECT_LT(kp.orientation, 2.0 * std::numbers::pi);
  }
}

TEST(Detector, LowRecallFindsMore) {
  const ImageGray img = to_gray(synthetic_texture(160, 120, 12));
  const auto normal = extract_handcrafted(img, DetectorConfig{});
  const auto dense = extract_handcrafted(img, DetectorConfig::low_recall());
  EXPECT_GE(dense.keypoints.size(), normal.keypoints.size());
}

TEST(Detector, Deterministic) {
  const ImageGray img = to_gray(synthetic_texture(160, 120, 3));
  const auto a = extract_handcrafted(img, DetectorConfig{});
  const auto b = extract_handcrafted(img, DetectorConfig{});
  ASSERT_EQ(a.keypoints.size(), b.keypoints.size());
  for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
    EXPECT_EQ(a.keypoints[i].x, b.keypoints[i].x);
    EXPECT_EQ(a.keypoints[i].orientation, b.keypoints[i].orientation);
  }
  EXPECT_EQ(a.descriptors, b.descriptors);
}

TEST(DetectorConfig, Validation) {
  DetectorConfig cfg;
  cfg.max_keypoints = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = DetectorConfig{};
  cfg.n_octaves = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Descriptor, DescribeAtReproducesDetections) {
  const ImageGray img = to_gray(synthetic_texture(160, 120, 14));
  const DetectorConfig cfg;
  const ScaleSpace space = build_scale_space(img, cfg);
  const auto f = extract_handcrafted(img, cfg);
  ASSERT_GT(f.keypoints.size(), 10u);
  for (std::size_t i = 0; i < f.keypoints.size(); ++i) {
    const Keypoint& kp = f.keypoints[i];
    const auto d = describe_at(space, Point2(kp.x, kp.y), kp.sigma, kp.orientation, cfg);
    ASSERT_TRUE(d.has_value());
    EXPECT_LT((d->transpose() - f.descriptors.row(static_cast<Index>(i))).cwiseAbs().maxCoeff(), 1e-6) << i;
  }
}
