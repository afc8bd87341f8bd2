#include "resfeat/image.hpp"

#include <algorithm>
#include <cmath>

namespace resfeat {

ImageGray to_gray(const ImageRGB& img) {
  Plane g = 0.299f * img.data[0] + 0.587f * img.data[1] + 0.114f * img.data[2];
  return ImageGray(g.max(0.0f).min(1.0f));
}

ImageRGB to_rgb(const ImageGray& img) {
  ImageRGB out;
  for (auto& c : out.data) c = img.data;
  return out;
}

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

Eigen::ArrayXd gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be positive");
  const Index radius = static_cast<Index>(std::ceil(4.0 * sigma));
  Eigen::ArrayXd k(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  }
  return k / k.sum();
}

Plane gaussian_blur(const Plane& img, double sigma) {
  const Eigen::ArrayXd kd = gaussian_kernel(sigma);
  const Eigen::ArrayXf k = kd.cast<float>();
  const Index radius = (k.size() - 1) / 2;
  const Index h = img.rows(), w = img.cols();

  // Horizontal pass on a padded row buffer, then vertical pass.
  Plane tmp(h, w);
  Eigen::ArrayXf row(w + 2 * radius);
  for (Index y = 0; y < h; ++y) {
    for (Index x = -radius; x < w + radius; ++x) row[x + radius] = img(y, reflect_index(x, w));
    for (Index x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (Index t = 0; t < k.size(); ++t) acc += k[t] * row[x + t];
      tmp(y, x) = acc;
    }
  }
  Plane out(h, w);
  for (Index y = 0; y < h; ++y) {
    out.row(y).setZero();
    for (Index t = 0; t < k.size(); ++t) {
      out.row(y) += k[t] * tmp.row(reflect_index(y + t - radius, h));
    }
  }
  return out;
}

ImageGray gaussian_blur(const ImageGray& img, double sigma) {
  return ImageGray(gaussian_blur(img.data, sigma));
}

BilinearResult sample_bilinear(const Plane& img, double x, double y) {
  const double max_x = static_cast<double>(img.cols() - 1);
  const double max_y = static_cast<double>(img.rows() - 1);
  if (!(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y)) return {};
  const Index x0 = static_cast<Index>(std::floor(x));
  const Index y0 = static_cast<Index>(std::floor(y));
  const Index x1 = std::min<Index>(x0 + 1, img.cols() - 1);
  const Index y1 = std::min<Index>(y0 + 1, img.rows() - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double v = (1 - fx) * (1 - fy) * img(y0, x0) + fx * (1 - fy) * img(y0, x1) +
                   (1 - fx) * fy * img(y1, x0) + fx * fy * img(y1, x1);
  return {static_cast<float>(v), true};
}

Plane resize_bilinear(const Plane& img, Index width, Index height) {
  if (width == img.cols() && height == img.rows()) return img;
  const double sx = static_cast<double>(img.cols()) / static_cast<double>(width);
  const double sy = static_cast<double>(img.rows()) / static_cast<double>(height);
  Plane out(height, width);
  const double max_x = static_cast<double>(img.cols() - 1);
  const double max_y = static_cast<double>(img.rows() - 1);
  for (Index y = 0; y < height; ++y) {
    const double src_y = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    for (Index x = 0; x < width; ++x) {
      const double src_x = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      out(y, x) = sample_bilinear(img, src_x, src_y).value;
    }
  }
  return out;
}

ImageGray resize_bilinear(const ImageGray& img, Index width, Index height) {
  return ImageGray(resize_bilinear(img.data, width, height));
}

ImageRGB resize_bilinear(const ImageRGB& img, Index width, Index height) {
  ImageRGB out;
  for (int c = 0; c < 3; ++c) out.data[c] = resize_bilinear(img.data[c], width, height);
  return out;
}

Plane downsample2(const Plane& img) {
  const Index h = (img.rows() + 1) / 2, w = (img.cols() + 1) / 2;
  Plane out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) out(y, x) = img(2 * y, 2 * x);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> image_tensor(const ImageRGB& img) {
  const Index h = img.height(), w = img.width();
  Tensor<Scalar> t({3, h, w});
  for (Index c = 0; c < 3; ++c) {
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) t[(c * h + y) * w + x] = static_cast<Scalar>(img.data[c](y, x));
    }
  }
  return t;
}

template Tensor<float> image_tensor(const ImageRGB&);
template Tensor<double> image_tensor(const ImageRGB&);

ImageRGB clamp01(ImageRGB img) {
  for (auto& c : img.data) c = c.max(0.0f).min(1.0f);
  return img;
}

}  // namespace resfeat
