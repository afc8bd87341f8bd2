#include "resfeat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "resfeat/hpatches.hpp"
#include "resfeat/image_io.hpp"

namespace resfeat {

namespace {

Plane value_noise(Index width, Index height, Index cell, Rng& rng) {
  const Index gw = width / cell + 2, gh = height / cell + 2;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Plane grid(gh, gw);
  for (Index i = 0; i < grid.size(); ++i) grid.data()[i] = u(rng);
  Plane out(height, width);
  for (Index y = 0; y < height; ++y) {
    const double gy = static_cast<double>(y) / static_cast<double>(cell);
    const Index y0 = static_cast<Index>(gy);
    const double fy = gy - static_cast<double>(y0);
    const double sy = fy * fy * (3 - 2 * fy);
    for (Index x = 0; x < width; ++x) {
      const double gx = static_cast<double>(x) / static_cast<double>(cell);
      const Index x0 = static_cast<Index>(gx);
      const double fx = gx - static_cast<double>(x0);
      const double sx = fx * fx * (3 - 2 * fx);
      const double top = grid(y0, x0) * (1 - sx) + grid(y0, x0 + 1) * sx;
      const double bottom = grid(y0 + 1, x0) * (1 - sx) + grid(y0 + 1, x0 + 1) * sx;
      out(y, x) = static_cast<float>(top * (1 - sy) + bottom * sy);
    }
  }
  return out;
}

struct Shape2 {
  int kind;  // 0 rectangle, 1 ellipse, 2 triangle
  double cx, cy, a, b, angle;
  std::array<Point2, 3> tri;
  std::array<float, 3> color;
};

bool inside(const Shape2& s, double x, double y) {
  if (s.kind == 2) {
    auto edge = [](const Point2& p, const Point2& q, double px, double py) {
      return (q.x() - p.x()) * (py - p.y()) - (q.y() - p.y()) * (px - p.x());
    };
    const double e0 = edge(s.tri[0], s.tri[1], x, y);
    const double e1 = edge(s.tri[1], s.tri[2], x, y);
    const double e2 = edge(s.tri[2], s.tri[0], x, y);
    return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
  }
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  const double dx = x - s.cx, dy = y - s.cy;
  const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
  if (s.kind == 0) return std::abs(u) <= s.a && std::abs(v) <= s.b;
  return (u * u) / (s.a * s.a) + (v * v) / (s.b * s.b) <= 1.0;
}

}  // namespace

ImageRGB synthetic_texture(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageRGB img(width, height);
  for (auto& c : img.data) {
    c = 0.5f * value_noise(width, height, 32, rng) + 0.3f * value_noise(width, height, 12, rng) +
        0.2f * value_noise(width, height, 5, rng);
  }
  // Shape sizes are absolute (pixels), so detail density is the same at any resolution.
  const double scale = 9.0;
  const int n_shapes = std::max(8, static_cast<int>(static_cast<double>(width) * height / 450.0));
  for (int i = 0; i < n_shapes; ++i) {
    Shape2 s{};
    s.kind = static_cast<int>(u(rng) * 3.0) % 3;
    s.cx = u(rng) * width;
    s.cy = u(rng) * height;
    s.a = scale * (0.3 + 1.7 * u(rng));
    s.b = scale * (0.3 + 1.7 * u(rng));
    s.angle = u(rng) * std::numbers::pi;
    for (auto& p : s.tri) {
      const double r = scale * (0.5 + 2.0 * u(rng)), t = u(rng) * 2.0 * std::numbers::pi;
      p = Point2(s.cx + r * std::cos(t), s.cy + r * std::sin(t));
    }
    for (auto& c : s.color) c = static_cast<float>(u(rng));
    const double reach = 3.0 * scale;
    const int x0 = std::max(0, static_cast<int>(s.cx - reach)), x1 = std::min(width - 1, static_cast<int>(s.cx + reach));
    const int y0 = std::max(0, static_cast<int>(s.cy - reach)), y1 = std::min(height - 1, static_cast<int>(s.cy + reach));
    const float shade = static_cast<float>(0.6 + 0.4 * u(rng));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!inside(s, x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          float& px = img.data[static_cast<std::size_t>(c)](y, x);
          px = shade * s.color[static_cast<std::size_t>(c)] + (1.0f - shade) * px;
        }
      }
    }
  }
  for (auto& c : img.data) c = gaussian_blur(c, 0.7);
  return clamp01(std::move(img));
}

SyntheticScene synthetic_scene(int width, int height, std::uint64_t seed, const AugmentConfig& aug) {
  const int margin_x = width / 2, margin_y = height / 2;
  const ImageRGB canvas = synthetic_texture(width + 2 * margin_x, height + 2 * margin_y, seed);
  SyntheticScene scene;
  Rng rng(seed ^ 0x5ce9e5ULL);
  AugmentConfig geo = aug;
  geo.min_coverage = std::max(aug.min_coverage, 0.5);
  auto render = [&](const Homography& h) {
    // view(q) = canvas(offset + H^-1 q)
    const Eigen::Matrix3d inv = h.inverse().matrix();
    ImageRGB out(width, height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Eigen::Vector3d p = inv * Eigen::Vector3d(x, y, 1.0);
        const double sx = p.x() / p.z() + margin_x, sy = p.y() / p.z() + margin_y;
        for (int c = 0; c < 3; ++c) {
          out.data[static_cast<std::size_t>(c)](y, x) = sample_bilinear(canvas.data[static_cast<std::size_t>(c)], sx, sy).value;
        }
      }
    }
    return out;
  };
  scene.images[0] = render(Homography::identity());
  for (int k = 0; k < 5; ++k) {
    scene.h[static_cast<std::size_t>(k)] = sample_random_homography(geo, width, height, rng);
    scene.images[static_cast<std::size_t>(k + 1)] =
        photometric_augment(render(scene.h[static_cast<std::size_t>(k)]), aug, rng);
  }
  return scene;
}

void write_synthetic_corpus(const std::filesystem::path& dir, int count, int width, int height, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.png", i);
    save_image(dir / name, synthetic_texture(width, height, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  }
}

void write_synthetic_hpatches(const std::filesystem::path& dir, int count, int width, int height,
                              std::uint64_t seed, const AugmentConfig& aug) {
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    const SyntheticScene s = synthetic_scene(width, height, seed * 7919ULL + static_cast<std::uint64_t>(i), aug);
    write_scene(dir / name, s.images, s.h);
  }
}

}  // namespace resfeat
