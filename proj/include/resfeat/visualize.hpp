#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resfeat/homography.hpp"
#include "resfeat/image.hpp"
#include "resfeat/matching.hpp"

namespace resfeat {

using Color = std::array<float, 3>;

/// Linear red (error >= max_error) to green (error 0).
Color error_color(double error, double max_error = 10.0);

void draw_line(ImageRGB& img, const Point2& p0, const Point2& p1, const Color& color);
void fill_rect(ImageRGB& img, Index x0, Index y0, Index x1, Index y1, const Color& color);

/// a and b side by side (width_a + width_b, max height) with one line per
/// match, colored by the reprojection error under h_gt (a -> b).
ImageRGB visualize_matches(const ImageRGB& a, const ImageRGB& b, const std::vector<Match>& matches,
                           std::span<const Point2> points_a, std::span<const Point2> points_b,
                           const Homography& h_gt);

/// Line plot of several (step, value) series on shared axes; series i uses
/// series_color(i). Values are plotted over [0, max(1, max value)].
ImageRGB plot_curves(const std::vector<std::vector<std::pair<int, double>>>& series, int width = 640,
                     int height = 400);
Color series_color(std::size_t i);

}  // namespace resfeat
