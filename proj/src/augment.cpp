#include "resfeat/augment.hpp"

#include <cmath>
#include <numbers>

#include "resfeat/error.hpp"

namespace resfeat {

AugmentConfig AugmentConfig::none() {
  AugmentConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.brightness_delta = 0.0;
  cfg.contrast_range = {1.0, 1.0};
  cfg.saturation_range = {1.0, 1.0};
  cfg.hue_delta = 0.0;
  cfg.max_scale_change = 0.0;
  cfg.max_rotation = 0.0;
  cfg.max_translation = 0.0;
  cfg.max_perspective = 0.0;
  return cfg;
}

void AugmentConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0)) throw ConfigError(std::string("augment.") + name + " must be >= 0");
  };
  nonneg(noise_sigma, "noise_sigma");
  nonneg(brightness_delta, "brightness_delta");
  nonneg(hue_delta, "hue_delta");
  nonneg(max_rotation, "max_rotation");
  nonneg(max_translation, "max_translation");
  nonneg(max_perspective, "max_perspective");
  if (!(max_scale_change >= 0.0 && max_scale_change < 1.0)) {
    throw ConfigError("augment.max_scale_change must be in [0, 1)");
  }
  if (!(contrast_range.first > 0.0 && contrast_range.first <= contrast_range.second)) {
    throw ConfigError("augment.contrast_range must satisfy 0 < low <= high");
  }
  if (!(saturation_range.first >= 0.0 && saturation_range.first <= saturation_range.second)) {
    throw ConfigError("augment.saturation_range must satisfy 0 <= low <= high");
  }
  if (!(min_coverage > 0.0 && min_coverage <= 1.0)) {
    throw ConfigError("augment.min_coverage must be in (0, 1]");
  }
}

namespace {

template <typename Image>
WarpResult<Image> warp_planes(const Image& img, const Homography& h) {
  const Homography inv = h.inverse();
  const Eigen::Matrix3d& m = inv.matrix();
  const Index w = img.width(), ht = img.height();
  WarpResult<Image> out{Image(w, ht), Plane::Zero(ht, w)};
  for (Index y = 0; y < ht; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Eigen::Vector3d q = m * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      if (!(std::abs(q.z()) > 1e-12)) continue;
      const double sx = q.x() / q.z(), sy = q.y() / q.z();
      bool valid = false;
      if constexpr (std::is_same_v<Image, ImageRGB>) {
        for (int c = 0; c < 3; ++c) {
          const BilinearResult r = sample_bilinear(img.data[c], sx, sy);
          out.image.data[c](y, x) = r.value;
          valid = r.valid;
        }
      } else {
        const BilinearResult r = sample_bilinear(img.data, sx, sy);
        out.image.data(y, x) = r.value;
        valid = r.valid;
      }
      out.valid(y, x) = valid ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace

WarpResult<ImageRGB> warp_image(const ImageRGB& img, const Homography& h) { return warp_planes(img, h); }
WarpResult<ImageGray> warp_image(const ImageGray& img, const Homography& h) { return warp_planes(img, h); }

double frame_coverage(const Homography& h, Index width, Index height) {
  const Eigen::Matrix3d& m = h.matrix();
  const double max_x = static_cast<double>(width - 1), max_y = static_cast<double>(height - 1);
  for (double cx : {0.0, max_x}) {
    for (double cy : {0.0, max_y}) {
      if ((m * Eigen::Vector3d(cx, cy, 1.0)).z() <= 1e-9) return 0.0;
    }
  }
  constexpr int kGrid = 32;
  int inside = 0;
  for (int j = 0; j < kGrid; ++j) {
    for (int i = 0; i < kGrid; ++i) {
      const Point2 p((i + 0.5) / kGrid * max_x, (j + 0.5) / kGrid * max_y);
      const Point2 q = h.apply(p);
      if (q.x() >= 0.0 && q.y() >= 0.0 && q.x() <= max_x && q.y() <= max_y) ++inside;
    }
  }
  return static_cast<double>(inside) / (kGrid * kGrid);
}

Homography sample_random_homography(const AugmentConfig& cfg, Index width, Index height, Rng& rng) {
  cfg.validate();
  const double cx = 0.5 * static_cast<double>(width - 1);
  const double cy = 0.5 * static_cast<double>(height - 1);
  auto symmetric = [&rng](double mag) {
    if (mag == 0.0) return 0.0;
    return std::uniform_real_distribution<double>(-mag, mag)(rng);
  };
  const Eigen::Matrix3d center = Homography::translation(-cx, -cy).matrix();
  const Eigen::Matrix3d uncenter = Homography::translation(cx, cy).matrix();
  constexpr int kMaxTries = 100;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const double scale = 1.0 + symmetric(cfg.max_scale_change);
    const double angle = symmetric(cfg.max_rotation);
    const double tx = symmetric(cfg.max_translation * static_cast<double>(width));
    const double ty = symmetric(cfg.max_translation * static_cast<double>(height));
    const double px = symmetric(cfg.max_perspective);
    const double py = symmetric(cfg.max_perspective);

    Eigen::Matrix3d persp = Eigen::Matrix3d::Identity();
    persp(2, 0) = px;
    persp(2, 1) = py;
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    rot(0, 0) = std::cos(angle);
    rot(0, 1) = -std::sin(angle);
    rot(1, 0) = std::sin(angle);
    rot(1, 1) = std::cos(angle);
    const Eigen::Matrix3d scl = Homography::scaling(scale, scale).matrix();
    const Eigen::Matrix3d trans = Homography::translation(tx, ty).matrix();

    const Eigen::Matrix3d m = uncenter * persp * rot * scl * trans * center;
    if (!(std::abs(m.determinant()) > 1e-12)) continue;
    const Homography h(m);
    if (frame_coverage(h, width, height) >= cfg.min_coverage) return h;
  }
  throw ConfigError("sample_random_homography: coverage constraint failed after 100 draws");
}

PhotometricParams sample_photometric(const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  auto uniform = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  PhotometricParams p;
  p.brightness = uniform(-cfg.brightness_delta, cfg.brightness_delta);
  p.contrast = uniform(cfg.contrast_range.first, cfg.contrast_range.second);
  p.saturation = uniform(cfg.saturation_range.first, cfg.saturation_range.second);
  p.hue = uniform(-cfg.hue_delta, cfg.hue_delta);
  p.noise_sigma = cfg.noise_sigma;
  return p;
}

namespace {

void rotate_hue(ImageRGB& img, double radians) {
  const float shift = static_cast<float>(radians / (2.0 * std::numbers::pi));
  const Index h = img.height(), w = img.width();
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const float r = img.data[0](y, x), g = img.data[1](y, x), b = img.data[2](y, x);
      const float maxc = std::max({r, g, b}), minc = std::min({r, g, b});
      const float v = maxc, delta = maxc - minc;
      if (delta <= 0.0f || maxc <= 0.0f) continue;  // gray pixel: hue undefined
      const float s = delta / maxc;
      float hue;
      if (maxc == r) {
        hue = (g - b) / delta;
      } else if (maxc == g) {
        hue = 2.0f + (b - r) / delta;
      } else {
        hue = 4.0f + (r - g) / delta;
      }
      hue = hue / 6.0f + shift;
      hue -= std::floor(hue);
      const float hh = hue * 6.0f;
      const int sector = std::min(5, static_cast<int>(hh));
      const float f = hh - static_cast<float>(sector);
      const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
      float rgb[3];
      switch (sector) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
      }
      for (int c = 0; c < 3; ++c) img.data[c](y, x) = rgb[c];
    }
  }
}

}  // namespace

ImageRGB apply_photometric(const ImageRGB& input, const PhotometricParams& p, Rng& rng) {
  ImageRGB img = input;
  if (p.brightness != 0.0) {
    for (auto& c : img.data) c += static_cast<float>(p.brightness);
    img = clamp01(std::move(img));
  }
  if (p.contrast != 1.0) {
    const float mean = to_gray(img).data.mean();
    for (auto& c : img.data) c = (c - mean) * static_cast<float>(p.contrast) + mean;
    img = clamp01(std::move(img));
  }
  if (p.saturation != 1.0) {
    const Plane gray = 0.299f * img.data[0] + 0.587f * img.data[1] + 0.114f * img.data[2];
    for (auto& c : img.data) c = gray + static_cast<float>(p.saturation) * (c - gray);
    img = clamp01(std::move(img));
  }
  if (p.hue != 0.0) rotate_hue(img, p.hue);
  if (p.noise_sigma > 0.0) {
    std::normal_distribution<float> noise(0.0f, static_cast<float>(p.noise_sigma));
    for (auto& c : img.data) {
      for (Index i = 0; i < c.size(); ++i) c.data()[i] += noise(rng);
    }
    img = clamp01(std::move(img));
  }
  return img;
}

ImageRGB photometric_augment(const ImageRGB& img, const AugmentConfig& cfg, Rng& rng) {
  const PhotometricParams params = sample_photometric(cfg, rng);
  return apply_photometric(img, params, rng);
}

}  // namespace resfeat
