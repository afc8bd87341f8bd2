#include "resfeat/visualize.hpp"

#include <algorithm>
#include <cmath>

namespace resfeat {

Color error_color(double error, double max_error) {
  const double t = std::isfinite(error) ? std::clamp(error / max_error, 0.0, 1.0) : 1.0;
  return {static_cast<float>(t), static_cast<float>(1.0 - t), 0.0f};
}

namespace {

void put(ImageRGB& img, Index x, Index y, const Color& c) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  for (int k = 0; k < 3; ++k) img.data[static_cast<std::size_t>(k)](y, x) = c[static_cast<std::size_t>(k)];
}

}  // namespace

void draw_line(ImageRGB& img, const Point2& p0, const Point2& p1, const Color& color) {
  Index x0 = std::lround(p0.x()), y0 = std::lround(p0.y());
  const Index x1 = std::lround(p1.x()), y1 = std::lround(p1.y());
  const Index dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const Index sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  Index err = dx + dy;
  while (true) {
    put(img, x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const Index e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void fill_rect(ImageRGB& img, Index x0, Index y0, Index x1, Index y1, const Color& color) {
  for (Index y = y0; y <= y1; ++y) {
    for (Index x = x0; x <= x1; ++x) put(img, x, y, color);
  }
}

ImageRGB visualize_matches(const ImageRGB& a, const ImageRGB& b, const std::vector<Match>& matches,
                           std::span<const Point2> points_a, std::span<const Point2> points_b,
                           const Homography& h_gt) {
  const Index w = a.width() + b.width();
  const Index h = std::max(a.height(), b.height());
  ImageRGB out(w, h, 0.0f);
  for (int c = 0; c < 3; ++c) {
    out.data[static_cast<std::size_t>(c)].block(0, 0, a.height(), a.width()) = a.data[static_cast<std::size_t>(c)];
    out.data[static_cast<std::size_t>(c)].block(0, a.width(), b.height(), b.width()) =
        b.data[static_cast<std::size_t>(c)];
  }
  const Point2 offset(static_cast<double>(a.width()), 0.0);
  for (const Match& m : matches) {
    const Point2& pa = points_a[static_cast<std::size_t>(m.index_a)];
    const Point2& pb = points_b[static_cast<std::size_t>(m.index_b)];
    const Eigen::Vector3d q = h_gt.matrix() * pa.homogeneous();
    const double error = std::abs(q.z()) > 1e-12 ? (Point2(q.hnormalized()) - pb).norm()
                                                 : std::numeric_limits<double>::infinity();
    draw_line(out, pa, pb + offset, error_color(error));
  }
  return out;
}

Color series_color(std::size_t i) {
  static constexpr Color kPalette[] = {{0.12f, 0.47f, 0.71f}, {1.0f, 0.5f, 0.05f}, {0.17f, 0.63f, 0.17f},
                                       {0.84f, 0.15f, 0.16f}, {0.58f, 0.4f, 0.74f}, {0.55f, 0.34f, 0.29f}};
  return kPalette[i % std::size(kPalette)];
}

ImageRGB plot_curves(const std::vector<std::vector<std::pair<int, double>>>& series, int width, int height) {
  ImageRGB img(width, height, 1.0f);
  const Index left = 40, right = width - 20, top = 20, bottom = height - 30;
  int max_step = 1;
  double max_value = 1.0;
  for (const auto& s : series) {
    for (const auto& [step, v] : s) {
      max_step = std::max(max_step, step);
      if (std::isfinite(v)) max_value = std::max(max_value, v);
    }
  }
  const Color grid{0.88f, 0.88f, 0.88f}, axis{0.0f, 0.0f, 0.0f};
  for (int k = 1; k <= 4; ++k) {
    const double y = bottom - (bottom - top) * k / 4.0;
    draw_line(img, {static_cast<double>(left), y}, {static_cast<double>(right), y}, grid);
    const double x = left + (right - left) * k / 4.0;
    draw_line(img, {x, static_cast<double>(top)}, {x, static_cast<double>(bottom)}, grid);
  }
  draw_line(img, {static_cast<double>(left), static_cast<double>(bottom)},
            {static_cast<double>(right), static_cast<double>(bottom)}, axis);
  draw_line(img, {static_cast<double>(left), static_cast<double>(top)},
            {static_cast<double>(left), static_cast<double>(bottom)}, axis);
  auto to_px = [&](int step, double v) {
    return Point2(left + (right - left) * static_cast<double>(step) / max_step,
                  bottom - (bottom - top) * std::clamp(v / max_value, 0.0, 1.0));
  };
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Color c = series_color(i);
    const auto& s = series[i];
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      const Point2 p0 = to_px(s[k].first, s[k].second), p1 = to_px(s[k + 1].first, s[k + 1].second);
      draw_line(img, p0, p1, c);
      draw_line(img, p0 + Point2(0, 1), p1 + Point2(0, 1), c);
    }
    // legend swatch
    const Index lx = right - 16 - static_cast<Index>(i) * 14;
    fill_rect(img, lx, top - 14, lx + 9, top - 5, c);
  }
  return img;
}

}  // namespace resfeat
