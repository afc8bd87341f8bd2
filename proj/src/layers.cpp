#include "resfeat/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace resfeat {
namespace {

template <typename Scalar>
using Array = typename Tensor<Scalar>::Array;

void require_rank(const Shape& shape, Index rank, const char* op, const char* what) {
  if (static_cast<Index>(shape.size()) != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_string(shape));
  }
}

template <typename Scalar>
void require_grad_size(const Array<Scalar>& grad, Index n, const char* op) {
  if (grad.size() != n) {
    throw DimensionError(std::string(op) + ": gradient length " + std::to_string(grad.size()) +
                         " does not match output size " + std::to_string(n));
  }
}

// Rows indexed by (channel, ky, kx), columns by output pixel of rows [y0, y1).
template <typename Scalar>
void im2col_rows(const Tensor<Scalar>& input, Index y0, Index y1, Scalar* cols) {
  const Index channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const Index n = (y1 - y0) * width;
  std::fill(cols, cols + channels * 9 * n, Scalar(0));
  const Scalar* src = input.data();
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        Scalar* row = cols + (c * 9 + ky * 3 + kx) * n;
        const Index dy = ky - 1, dx = kx - 1;
        const Index x_begin = std::max<Index>(0, -dx);
        const Index x_end = std::min<Index>(width, width - dx);
        for (Index y = y0; y < y1; ++y) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= height) continue;
          const Scalar* in_row = src + (c * height + sy) * width;
          Scalar* out = row + (y - y0) * width;
          for (Index x = x_begin; x < x_end; ++x) out[x] = in_row[x + dx];
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_rows_add(const Scalar* cols, Index channels, Index height, Index width, Index y0, Index y1,
                     Scalar* dst) {
  const Index n = (y1 - y0) * width;
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Scalar* row = cols + (c * 9 + ky * 3 + kx) * n;
        const Index dy = ky - 1, dx = kx - 1;
        const Index x_begin = std::max<Index>(0, -dx);
        const Index x_end = std::min<Index>(width, width - dx);
        for (Index y = y0; y < y1; ++y) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= height) continue;
          Scalar* out_row = dst + (c * height + sy) * width;
          const Scalar* in = row + (y - y0) * width;
          for (Index x = x_begin; x < x_end; ++x) out_row[x + dx] += in[x];
        }
      }
    }
  }
}

// Rows per im2col chunk, keeping the column buffer near 1M entries.
Index chunk_rows(Index channels, Index height, Index width) {
  constexpr Index kChunkEntries = Index{1} << 20;
  return std::clamp<Index>(kChunkEntries / std::max<Index>(1, channels * 9 * width), 1, height);
}

template <typename Scalar>
Scalar* scratch(std::size_t n) {
  thread_local std::vector<Scalar> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer.data();
}

template <typename Scalar>
Scalar* scratch2(std::size_t n) {
  thread_local std::vector<Scalar> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer.data();
}

void check_conv_shapes(const Shape& in, const Shape& w, const Shape& b) {
  require_rank(in, 3, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weights");
  require_rank(b, 1, "conv2d", "bias");
  if (w[2] != 3 || w[3] != 3) {
    throw DimensionError("conv2d: kernel must be 3x3, got " + shape_string(w));
  }
  if (w[1] != in[0]) {
    throw DimensionError("conv2d: weights expect " + std::to_string(w[1]) +
                         " input channels, input " + shape_string(in) + " has " +
                         std::to_string(in[0]));
  }
  if (b[0] != w[0]) {
    throw DimensionError("conv2d: bias length " + std::to_string(b[0]) +
                         " does not match output channels " + std::to_string(w[0]));
  }
  if (in[1] < 1 || in[2] < 1) throw DimensionError("conv2d: empty spatial extent " + shape_string(in));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias) {
  check_conv_shapes(input.shape(), weights.shape(), bias.shape());
  const Index c_out = weights.dim(0), c_in = input.dim(0);
  const Index height = input.dim(1), width = input.dim(2);
  Tensor<Scalar> out({c_out, height, width});
  auto out_m = out.matrix(c_out, height * width);
  const auto w_m = weights.matrix(c_out, c_in * 9);
  const Index rows = chunk_rows(c_in, height, width);
  Scalar* buf = scratch<Scalar>(static_cast<std::size_t>(c_in * 9 * rows * width));
  for (Index y0 = 0; y0 < height; y0 += rows) {
    const Index y1 = std::min(height, y0 + rows), n = (y1 - y0) * width;
    im2col_rows(input, y0, y1, buf);
    Eigen::Map<const RowMatrix<Scalar>> cols(buf, c_in * 9, n);
    out_m.middleCols(y0 * width, n).noalias() = w_m * cols;
  }
  out_m.colwise() += bias.values().matrix();
  require_finite(out, "conv2d");
  return out;
}

template <typename Scalar>
void conv2d_backward(Tensor<Scalar>& input, Tensor<Scalar>& weights, Tensor<Scalar>& bias,
                     const Array<Scalar>& grad_output) {
  check_conv_shapes(input.shape(), weights.shape(), bias.shape());
  const Index c_out = weights.dim(0), c_in = input.dim(0);
  const Index height = input.dim(1), width = input.dim(2);
  const Index pixels = height * width;
  require_grad_size<Scalar>(grad_output, c_out * pixels, "conv2d_backward");
  Eigen::Map<const RowMatrix<Scalar>> g(grad_output.data(), c_out, pixels);

  auto gw = weights.grad_matrix(c_out, c_in * 9);
  bias.grad().matrix() += g.rowwise().sum();
  const auto w_m = weights.matrix(c_out, c_in * 9);
  Scalar* gin = input.grad().data();
  const Index rows = chunk_rows(c_in, height, width);
  const auto chunk = static_cast<std::size_t>(c_in * 9 * rows * width);
  Scalar* buf = scratch<Scalar>(chunk);
  Scalar* gbuf = scratch2<Scalar>(chunk);
  for (Index y0 = 0; y0 < height; y0 += rows) {
    const Index y1 = std::min(height, y0 + rows), n = (y1 - y0) * width;
    im2col_rows(input, y0, y1, buf);
    Eigen::Map<const RowMatrix<Scalar>> cols(buf, c_in * 9, n);
    const auto g_chunk = g.middleCols(y0 * width, n);
    gw.noalias() += g_chunk * cols.transpose();
    Eigen::Map<RowMatrix<Scalar>> grad_cols(gbuf, c_in * 9, n);
    grad_cols.noalias() = w_m.transpose() * g_chunk;
    col2im_rows_add(gbuf, c_in, height, width, y0, y1, gin);
  }
}

template <typename Scalar>
Tensor<Scalar> maxpool2x2(const Tensor<Scalar>& input) {
  require_rank(input.shape(), 3, "maxpool2x2", "input");
  const Index channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  if (height % 2 != 0 || width % 2 != 0) {
    throw DimensionError("maxpool2x2: spatial dims must be even, got " + shape_string(input.shape()));
  }
  const Index oh = height / 2, ow = width / 2;
  Tensor<Scalar> out({channels, oh, ow});
  const Scalar* src = input.data();
  Scalar* dst = out.data();
  for (Index c = 0; c < channels; ++c) {
    for (Index y = 0; y < oh; ++y) {
      const Scalar* r0 = src + (c * height + 2 * y) * width;
      const Scalar* r1 = r0 + width;
      for (Index x = 0; x < ow; ++x) {
        dst[(c * oh + y) * ow + x] =
            std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
      }
    }
  }
  return out;
}

template <typename Scalar>
void maxpool2x2_backward(Tensor<Scalar>& input, const Array<Scalar>& grad_output) {
  require_rank(input.shape(), 3, "maxpool2x2_backward", "input");
  const Index channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const Index oh = height / 2, ow = width / 2;
  require_grad_size<Scalar>(grad_output, channels * oh * ow, "maxpool2x2_backward");
  const Scalar* src = input.data();
  Scalar* gin = input.grad().data();
  for (Index c = 0; c < channels; ++c) {
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        const Index base = (c * height + 2 * y) * width + 2 * x;
        const Index candidates[4] = {base, base + 1, base + width, base + width + 1};
        Index best = candidates[0];
        for (int k = 1; k < 4; ++k) {
          if (src[candidates[k]] > src[best]) best = candidates[k];
        }
        gin[best] += grad_output[(c * oh + y) * ow + x];
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias) {
  require_rank(input.shape(), 2, "linear", "input");
  require_rank(weights.shape(), 2, "linear", "weights");
  require_rank(bias.shape(), 1, "linear", "bias");
  const Index n = input.dim(0), d_in = input.dim(1), d_out = weights.dim(0);
  if (weights.dim(1) != d_in) {
    throw DimensionError("linear: input " + shape_string(input.shape()) +
                         " incompatible with weights " + shape_string(weights.shape()));
  }
  if (bias.dim(0) != d_out) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) +
                         " incompatible with weights " + shape_string(weights.shape()));
  }
  Tensor<Scalar> out({n, d_out});
  auto out_m = out.matrix(n, d_out);
  out_m.noalias() = input.matrix(n, d_in) * weights.matrix(d_out, d_in).transpose();
  out_m.rowwise() += bias.values().matrix().transpose();
  require_finite(out, "linear");
  return out;
}

template <typename Scalar>
void linear_backward(Tensor<Scalar>& input, Tensor<Scalar>& weights, Tensor<Scalar>& bias,
                     const Array<Scalar>& grad_output) {
  const Index n = input.dim(0), d_in = input.dim(1), d_out = weights.dim(0);
  require_grad_size<Scalar>(grad_output, n * d_out, "linear_backward");
  Eigen::Map<const RowMatrix<Scalar>> g(grad_output.data(), n, d_out);
  weights.grad_matrix(d_out, d_in).noalias() += g.transpose() * input.matrix(n, d_in);
  bias.grad().matrix() += g.colwise().sum().transpose();
  input.grad_matrix(n, d_in).noalias() += g * weights.matrix(d_out, d_in);
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
  return Tensor<Scalar>(input.shape(), input.values().max(Scalar(0)));
}

template <typename Scalar>
void relu_backward(Tensor<Scalar>& input, const Array<Scalar>& grad_output) {
  require_grad_size<Scalar>(grad_output, input.size(), "relu_backward");
  input.grad() += (input.values() > Scalar(0)).select(grad_output, Scalar(0));
}

namespace {

template <typename Scalar>
std::pair<Index, Index> rows_cols(const Tensor<Scalar>& t, const char* op) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_string(t.shape()));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> l2_normalize(const Tensor<Scalar>& input, double eps) {
  const auto [rows, cols] = rows_cols(input, "l2_normalize");
  if (cols < 1) throw DimensionError("l2_normalize: empty vector");
  Tensor<Scalar> out(input.shape());
  auto in_m = input.matrix(rows, cols);
  auto out_m = out.matrix(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Scalar norm = std::max<Scalar>(in_m.row(r).norm(), static_cast<Scalar>(eps));
    out_m.row(r) = in_m.row(r) / norm;
  }
  require_finite(out, "l2_normalize");
  return out;
}

template <typename Scalar>
void l2_normalize_backward(Tensor<Scalar>& input, const Tensor<Scalar>& output,
                           const Array<Scalar>& grad_output, double eps) {
  const auto [rows, cols] = rows_cols(input, "l2_normalize_backward");
  require_grad_size<Scalar>(grad_output, input.size(), "l2_normalize_backward");
  auto in_m = input.matrix(rows, cols);
  auto out_m = output.matrix(rows, cols);
  Eigen::Map<const RowMatrix<Scalar>> g(grad_output.data(), rows, cols);
  auto gin = input.grad_matrix(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Scalar norm = in_m.row(r).norm();
    if (norm > static_cast<Scalar>(eps)) {
      const Scalar proj = out_m.row(r).dot(g.row(r));
      gin.row(r) += (g.row(r) - proj * out_m.row(r)) / norm;
    } else {
      gin.row(r) += g.row(r) / static_cast<Scalar>(eps);
    }
  }
}

namespace {

struct BilinearTap {
  Index x0, y0, x1, y1;
  double wx, wy;
};

BilinearTap bilinear_tap(const Eigen::Vector2d& p, Index grid_w, Index grid_h) {
  const double u = p.x(), v = p.y();
  if (!(u >= 0.0 && v >= 0.0 && u <= static_cast<double>(grid_w - 1) &&
        v <= static_cast<double>(grid_h - 1))) {
    throw DimensionError("bilinear_sample: point (" + std::to_string(u) + ", " +
                         std::to_string(v) + ") outside grid " + std::to_string(grid_w) + "x" +
                         std::to_string(grid_h));
  }
  BilinearTap t;
  t.x0 = static_cast<Index>(std::floor(u));
  t.y0 = static_cast<Index>(std::floor(v));
  t.x1 = std::min(t.x0 + 1, grid_w - 1);
  t.y1 = std::min(t.y0 + 1, grid_h - 1);
  t.wx = u - static_cast<double>(t.x0);
  t.wy = v - static_cast<double>(t.y0);
  return t;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> bilinear_sample(const Tensor<Scalar>& dense, std::span<const Eigen::Vector2d> points) {
  require_rank(dense.shape(), 3, "bilinear_sample", "dense map");
  const Index depth = dense.dim(0), grid_h = dense.dim(1), grid_w = dense.dim(2);
  const Index plane = grid_h * grid_w;
  const Index n = static_cast<Index>(points.size());
  Tensor<Scalar> out({n, depth});
  const Scalar* src = dense.data();
  Scalar* dst = out.data();
  for (Index i = 0; i < n; ++i) {
    const BilinearTap t = bilinear_tap(points[static_cast<std::size_t>(i)], grid_w, grid_h);
    const Scalar w00 = static_cast<Scalar>((1 - t.wx) * (1 - t.wy));
    const Scalar w01 = static_cast<Scalar>(t.wx * (1 - t.wy));
    const Scalar w10 = static_cast<Scalar>((1 - t.wx) * t.wy);
    const Scalar w11 = static_cast<Scalar>(t.wx * t.wy);
    const Index o00 = t.y0 * grid_w + t.x0, o01 = t.y0 * grid_w + t.x1;
    const Index o10 = t.y1 * grid_w + t.x0, o11 = t.y1 * grid_w + t.x1;
    for (Index d = 0; d < depth; ++d) {
      const Scalar* p = src + d * plane;
      dst[i * depth + d] = w00 * p[o00] + w01 * p[o01] + w10 * p[o10] + w11 * p[o11];
    }
  }
  return out;
}

template <typename Scalar>
void bilinear_sample_backward(Tensor<Scalar>& dense, std::span<const Eigen::Vector2d> points,
                              const Array<Scalar>& grad_output) {
  const Index depth = dense.dim(0), grid_h = dense.dim(1), grid_w = dense.dim(2);
  const Index plane = grid_h * grid_w;
  const Index n = static_cast<Index>(points.size());
  require_grad_size<Scalar>(grad_output, n * depth, "bilinear_sample_backward");
  Scalar* gd = dense.grad().data();
  for (Index i = 0; i < n; ++i) {
    const BilinearTap t = bilinear_tap(points[static_cast<std::size_t>(i)], grid_w, grid_h);
    const Scalar w00 = static_cast<Scalar>((1 - t.wx) * (1 - t.wy));
    const Scalar w01 = static_cast<Scalar>(t.wx * (1 - t.wy));
    const Scalar w10 = static_cast<Scalar>((1 - t.wx) * t.wy);
    const Scalar w11 = static_cast<Scalar>(t.wx * t.wy);
    const Index o00 = t.y0 * grid_w + t.x0, o01 = t.y0 * grid_w + t.x1;
    const Index o10 = t.y1 * grid_w + t.x0, o11 = t.y1 * grid_w + t.x1;
    for (Index d = 0; d < depth; ++d) {
      const Scalar g = grad_output[i * depth + d];
      Scalar* p = gd + d * plane;
      p[o00] += w00 * g;
      p[o01] += w01 * g;
      p[o10] += w10 * g;
      p[o11] += w11 * g;
    }
  }
}

#define RESFEAT_INSTANTIATE_LAYERS(T)                                                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template void conv2d_backward(Tensor<T>&, Tensor<T>&, Tensor<T>&, const Array<T>&);         \
  template Tensor<T> maxpool2x2(const Tensor<T>&);                                            \
  template void maxpool2x2_backward(Tensor<T>&, const Array<T>&);                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template void linear_backward(Tensor<T>&, Tensor<T>&, Tensor<T>&, const Array<T>&);         \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template void relu_backward(Tensor<T>&, const Array<T>&);                                   \
  template Tensor<T> l2_normalize(const Tensor<T>&, double);                                  \
  template void l2_normalize_backward(Tensor<T>&, const Tensor<T>&, const Array<T>&, double); \
  template Tensor<T> bilinear_sample(const Tensor<T>&, std::span<const Eigen::Vector2d>);     \
  template void bilinear_sample_backward(Tensor<T>&, std::span<const Eigen::Vector2d>, const Array<T>&);

RESFEAT_INSTANTIATE_LAYERS(float)
RESFEAT_INSTANTIATE_LAYERS(double)

}  // namespace resfeat
