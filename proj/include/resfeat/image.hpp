#pragma once

#include <array>

#include <Eigen/Core>

#include "resfeat/tensor.hpp"

namespace resfeat {

/// One image channel, rows = height, values nominally in [0, 1].
using Plane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ImageGray {
  Plane data;

  ImageGray() = default;
  explicit ImageGray(Plane p) : data(std::move(p)) {}
  ImageGray(Index width, Index height, float fill = 0.0f) : data(Plane::Constant(height, width, fill)) {}

  Index width() const noexcept { return data.cols(); }
  Index height() const noexcept { return data.rows(); }
  float operator()(Index x, Index y) const { return data(y, x); }
  float& operator()(Index x, Index y) { return data(y, x); }
};

struct ImageRGB {
  std::array<Plane, 3> data;

  ImageRGB() = default;
  ImageRGB(Index width, Index height, float fill = 0.0f) {
    for (auto& c : data) c = Plane::Constant(height, width, fill);
  }

  Index width() const noexcept { return data[0].cols(); }
  Index height() const noexcept { return data[0].rows(); }
};

/// Luma 0.299 R + 0.587 G + 0.114 B, clamped to [0, 1].
ImageGray to_gray(const ImageRGB& img);
ImageRGB to_rgb(const ImageGray& img);

/// Reflect-101 border index (dcb|abcd|cba).
Index reflect_index(Index i, Index n);

/// Normalized sampled Gaussian with radius ceil(4 sigma).
Eigen::ArrayXd gaussian_kernel(double sigma);

/// Separable Gaussian blur with reflected borders.
Plane gaussian_blur(const Plane& img, double sigma);
ImageGray gaussian_blur(const ImageGray& img, double sigma);

/// Bilinear sample with pixel centers at integer coordinates; returns
/// nullopt-equivalent `valid = false` outside [0, W-1] x [0, H-1].
struct BilinearResult {
  float value = 0.0f;
  bool valid = false;
};
BilinearResult sample_bilinear(const Plane& img, double x, double y);

/// Bilinear resize with pixel-center alignment: src = (dst + 0.5) * s - 0.5.
Plane resize_bilinear(const Plane& img, Index width, Index height);
ImageGray resize_bilinear(const ImageGray& img, Index width, Index height);
ImageRGB resize_bilinear(const ImageRGB& img, Index width, Index height);

/// Every second pixel starting at (0, 0).
Plane downsample2(const Plane& img);

/// 3 x H x W tensor of an RGB image.
template <typename Scalar>
Tensor<Scalar> image_tensor(const ImageRGB& img);

ImageRGB clamp01(ImageRGB img);

}  // namespace resfeat
