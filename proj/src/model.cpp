#include "resfeat/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "resfeat/checkpoint.hpp"
#include "resfeat/config.hpp"
#include "resfeat/error.hpp"
#include "resfeat/layers.hpp"

namespace resfeat {

std::string to_string(ModelVariant v) { return v == ModelVariant::fused ? "fused" : "ablation"; }

ModelVariant parse_model_variant(const std::string& s) {
  if (s == "fused") return ModelVariant::fused;
  if (s == "ablation") return ModelVariant::ablation;
  throw ConfigError("unknown model variant '" + s + "' (expected fused or ablation)");
}

ModelConfig ModelConfig::fused() { return ModelConfig{}; }

ModelConfig ModelConfig::ablation() {
  ModelConfig cfg;
  cfg.variant = ModelVariant::ablation;
  cfg.d_s = 256;
  return cfg;
}

int ModelConfig::descriptor_dim() const { return variant == ModelVariant::fused ? d_s + d_r : d_s; }

std::vector<int> ModelConfig::effective_encoder_channels() const {
  std::vector<int> out = encoder_channels;
  if (small_mode) {
    for (int& c : out) c = std::max(1, c / 2);
  }
  return out;
}

int ModelConfig::effective_head_channels() const {
  return small_mode ? std::max(1, head_channels / 2) : head_channels;
}

void ModelConfig::validate() const {
  if (encoder_channels.size() != 8) throw ConfigError("model.encoder_channels must list 8 widths");
  for (int c : encoder_channels) {
    if (c < 1) throw ConfigError("model.encoder_channels entries must be >= 1");
  }
  if (head_channels < 1 || refine_hidden < 1) throw ConfigError("model widths must be >= 1");
  if (d_s < 1 || d_h < 1) throw ConfigError("model.d_s and model.d_h must be >= 1");
  if (variant == ModelVariant::fused) {
    if (d_r < 1) throw ConfigError("model.d_r must be >= 1");
    if (d_h != kHandcraftedDim) throw ConfigError("model.d_h must equal the handcrafted descriptor length 128");
    if (d_s + d_r != 256) throw ConfigError("model.d_s + model.d_r must equal 256");
  } else if (d_s != 256) {
    throw ConfigError("ablation model requires d_s = 256");
  }
}

Eigen::Vector2d pixel_to_grid(const Eigen::Vector2d& p, Index grid_width, Index grid_height) {
  const double u = (p.x() + 0.5) / kEncoderStride - 0.5;
  const double v = (p.y() + 0.5) / kEncoderStride - 0.5;
  return {std::clamp(u, 0.0, static_cast<double>(grid_width - 1)),
          std::clamp(v, 0.0, static_cast<double>(grid_height - 1))};
}

template <typename Scalar>
void FusionModel<Scalar>::build_layout(std::vector<std::pair<std::string, Shape>>& specs) {
  const auto ch = cfg_.effective_encoder_channels();
  const int head = cfg_.effective_head_channels();
  layers_.clear();
  specs.clear();
  auto add_conv = [&](const std::string& name, Index in, Index out) {
    layers_.push_back({Layer::conv, static_cast<int>(specs.size())});
    specs.emplace_back(name + ".weight", Shape{out, in, 3, 3});
    specs.emplace_back(name + ".bias", Shape{out});
  };
  const char* stage_names[] = {"conv1a", "conv1b", "conv2a", "conv2b", "conv3a", "conv3b", "conv4a", "conv4b"};
  Index in = 3;
  for (int i = 0; i < 8; ++i) {
    add_conv(std::string("encoder.") + stage_names[i], in, ch[static_cast<std::size_t>(i)]);
    layers_.push_back({Layer::relu, -1});
    in = ch[static_cast<std::size_t>(i)];
    if (i % 2 == 1 && i < 7) layers_.push_back({Layer::pool, -1});
  }
  add_conv("head.conv_a", in, head);
  layers_.push_back({Layer::relu, -1});
  add_conv("head.conv_b", head, cfg_.d_s);

  refine_first_ = -1;
  if (cfg_.variant == ModelVariant::fused) {
    refine_first_ = static_cast<int>(specs.size());
    specs.emplace_back("refine.fc1.weight", Shape{cfg_.refine_hidden, cfg_.d_h});
    specs.emplace_back("refine.fc1.bias", Shape{cfg_.refine_hidden});
    specs.emplace_back("refine.fc2.weight", Shape{cfg_.refine_hidden, cfg_.refine_hidden});
    specs.emplace_back("refine.fc2.bias", Shape{cfg_.refine_hidden});
    specs.emplace_back("refine.fc3.weight", Shape{cfg_.d_r, cfg_.refine_hidden});
    specs.emplace_back("refine.fc3.bias", Shape{cfg_.d_r});
  }
}

template <typename Scalar>
FusionModel<Scalar>::FusionModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::vector<std::pair<std::string, Shape>> specs;
  build_layout(specs);
  std::mt19937_64 rng(seed);
  params_.reserve(specs.size());
  for (const auto& [name, shape] : specs) {
    Tensor<Scalar> value(shape);
    value.values().setZero();
    if (shape.size() > 1) {
      Index fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (Index i = 0; i < value.size(); ++i) value[i] = static_cast<Scalar>(normal(rng));
    }
    params_.emplace_back(name, std::move(value));
  }
}

template <typename Scalar>
FusionModel<Scalar>::FusionModel(const ModelConfig& cfg, std::vector<Parameter<Scalar>> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  std::vector<std::pair<std::string, Shape>> specs;
  build_layout(specs);
  if (specs.size() != params_.size()) {
    throw FormatError("model: expected " + std::to_string(specs.size()) + " parameters, got " +
                      std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (params_[i].name != specs[i].first || params_[i].value.shape() != specs[i].second) {
      throw FormatError("model: parameter " + std::to_string(i) + " is '" + params_[i].name + "' " +
                        shape_string(params_[i].value.shape()) + ", expected '" + specs[i].first + "' " +
                        shape_string(specs[i].second));
    }
    if (params_[i].adam_m.shape() != specs[i].second) params_[i].adam_m = Tensor<Scalar>::constant(specs[i].second, 0);
    if (params_[i].adam_v.shape() != specs[i].second) params_[i].adam_v = Tensor<Scalar>::constant(specs[i].second, 0);
  }
}

template <typename Scalar>
int FusionModel<Scalar>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw ConfigError("model has no parameter '" + name + "'");
}

template <typename Scalar>
Parameter<Scalar>& FusionModel<Scalar>::parameter(const std::string& name) {
  return params_[static_cast<std::size_t>(index_of(name))];
}

template <typename Scalar>
const Parameter<Scalar>& FusionModel<Scalar>::parameter(const std::string& name) const {
  return params_[static_cast<std::size_t>(index_of(name))];
}

template <typename Scalar>
Index FusionModel<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename Scalar>
Index FusionModel<Scalar>::refine_parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) {
    if (p.name.rfind("refine.", 0) == 0) n += p.value.size();
  }
  return n;
}

template <typename Scalar>
void FusionModel<Scalar>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename Scalar>
Tensor<Scalar> FusionModel<Scalar>::encoder_forward(const Tensor<Scalar>& image, EncoderTrace<Scalar>* trace) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("encoder_forward: expected 3 x H x W image, got " + shape_string(image.shape()));
  }
  if (image.dim(1) % kEncoderStride != 0 || image.dim(2) % kEncoderStride != 0) {
    throw DimensionError("encoder_forward: H and W must be divisible by 8, got " + shape_string(image.shape()));
  }
  if (trace) {
    trace->inputs.clear();
    trace->inputs.reserve(layers_.size());
  }
  Tensor<Scalar> x = image;
  for (const Layer& layer : layers_) {
    Tensor<Scalar> y;
    switch (layer.kind) {
      case Layer::conv:
        y = conv2d(x, params_[static_cast<std::size_t>(layer.weight)].value,
                   params_[static_cast<std::size_t>(layer.weight + 1)].value);
        break;
      case Layer::relu:
        y = relu(x);
        break;
      case Layer::pool:
        y = maxpool2x2(x);
        break;
    }
    if (trace) {
      trace->inputs.push_back(std::move(x));
    }
    x = std::move(y);
  }
  return x;
}

template <typename Scalar>
void FusionModel<Scalar>::encoder_backward(EncoderTrace<Scalar>& trace,
                                           const typename Tensor<Scalar>::Array& grad_dense) {
  if (trace.inputs.size() != layers_.size()) throw Error("encoder_backward: trace does not match the model");
  typename Tensor<Scalar>::Array grad = grad_dense;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& layer = layers_[k];
    Tensor<Scalar>& input = trace.inputs[k];
    input.zero_grad();
    switch (layer.kind) {
      case Layer::conv:
        conv2d_backward(input, params_[static_cast<std::size_t>(layer.weight)].value,
                        params_[static_cast<std::size_t>(layer.weight + 1)].value, grad);
        break;
      case Layer::relu:
        relu_backward(input, grad);
        break;
      case Layer::pool:
        maxpool2x2_backward(input, grad);
        break;
    }
    grad = input.grad();
    if (k > 0) input.drop_grad();
  }
}

template <typename Scalar>
Tensor<Scalar> FusionModel<Scalar>::sample_cnn(const Tensor<Scalar>& dense,
                                               std::span<const Eigen::Vector2d> points) const {
  std::vector<Eigen::Vector2d> grid;
  grid.reserve(points.size());
  for (const auto& p : points) grid.push_back(pixel_to_grid(p, dense.dim(2), dense.dim(1)));
  Tensor<Scalar> sampled = bilinear_sample(dense, std::span<const Eigen::Vector2d>(grid));
  if (cfg_.normalize_halves || cfg_.variant == ModelVariant::ablation) return l2_normalize(sampled);
  return sampled;
}

template <typename Scalar>
Tensor<Scalar> FusionModel<Scalar>::refine_forward(const Tensor<Scalar>& y1) const {
  if (refine_first_ < 0) throw ConfigError("refine_forward: ablation model has no refine layer");
  if (y1.rank() != 2 || y1.dim(1) != cfg_.d_h) {
    throw DimensionError("refine_forward: expected N x " + std::to_string(cfg_.d_h) + " input, got " +
                         shape_string(y1.shape()));
  }
  const auto& p = params_;
  const auto r = static_cast<std::size_t>(refine_first_);
  Tensor<Scalar> h1 = relu(linear(y1, p[r].value, p[r + 1].value));
  Tensor<Scalar> h2 = relu(linear(h1, p[r + 2].value, p[r + 3].value));
  Tensor<Scalar> out = linear(h2, p[r + 4].value, p[r + 5].value);
  if (cfg_.normalize_halves) return l2_normalize(out);
  return out;
}

namespace {

template <typename Scalar>
Tensor<Scalar> concat_columns(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Index n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor<Scalar> out(Shape{n, da + db});
  auto m = out.matrix(n, da + db);
  m.leftCols(da) = a.matrix(n, da);
  m.rightCols(db) = b.matrix(n, db);
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> FusionModel<Scalar>::describe(const Tensor<Scalar>& image, std::span<const Eigen::Vector2d> points,
                                             const Tensor<Scalar>& y1, DescriptorTrace<Scalar>* trace) const {
  Tensor<Scalar> dense = encoder_forward(image, trace ? &trace->encoder : nullptr);
  return describe_dense(dense, points, y1, trace);
}

template <typename Scalar>
Tensor<Scalar> FusionModel<Scalar>::describe_dense(const Tensor<Scalar>& dense,
                                                   std::span<const Eigen::Vector2d> points,
                                                   const Tensor<Scalar>& y1,
                                                   DescriptorTrace<Scalar>* trace) const {
  if (dense.rank() != 3 || dense.dim(0) != cfg_.d_s) {
    throw DimensionError("describe: dense map must be " + std::to_string(cfg_.d_s) + " x Hc x Wc, got " +
                         shape_string(dense.shape()));
  }
  const Index n = static_cast<Index>(points.size());
  const bool fused = cfg_.variant == ModelVariant::fused;
  if (fused && (y1.rank() != 2 || y1.dim(0) != n || y1.dim(1) != cfg_.d_h)) {
    throw DimensionError("describe: y1 must be " + std::to_string(n) + " x " + std::to_string(cfg_.d_h) +
                         ", got " + shape_string(y1.shape()));
  }
  if (n == 0) return Tensor<Scalar>(Shape{0, cfg_.descriptor_dim()});

  DescriptorTrace<Scalar> local;
  DescriptorTrace<Scalar>& t = trace ? *trace : local;
  t.grid_points.clear();
  for (const auto& p : points) t.grid_points.push_back(pixel_to_grid(p, dense.dim(2), dense.dim(1)));
  t.sampled = bilinear_sample(dense, std::span<const Eigen::Vector2d>(t.grid_points));
  if (!fused) {
    t.output = l2_normalize(t.sampled);
  } else {
    t.cnn_half = cfg_.normalize_halves ? l2_normalize(t.sampled) : t.sampled;
    const auto r = static_cast<std::size_t>(refine_first_);
    t.y1 = y1;
    t.hidden1_pre = linear(t.y1, params_[r].value, params_[r + 1].value);
    t.hidden1 = relu(t.hidden1_pre);
    t.hidden2_pre = linear(t.hidden1, params_[r + 2].value, params_[r + 3].value);
    t.hidden2 = relu(t.hidden2_pre);
    t.refined = linear(t.hidden2, params_[r + 4].value, params_[r + 5].value);
    t.refined_half = cfg_.normalize_halves ? l2_normalize(t.refined) : t.refined;
    t.concat = concat_columns(t.cnn_half, t.refined_half);
    t.output = l2_normalize(t.concat);
  }
  if (trace) {
    trace->dense = dense;
    return trace->output;
  }
  return std::move(local.output);
}

template <typename Scalar>
void FusionModel<Scalar>::describe_backward(DescriptorTrace<Scalar>& t,
                                            const typename Tensor<Scalar>::Array& grad_output) {
  using Array = typename Tensor<Scalar>::Array;
  const Index n = static_cast<Index>(t.grid_points.size());
  if (n == 0) return;
  if (grad_output.size() != t.output.size()) throw DimensionError("describe_backward: gradient size mismatch");
  Array grad_sampled;
  if (cfg_.variant == ModelVariant::ablation) {
    t.sampled.zero_grad();
    l2_normalize_backward(t.sampled, t.output, grad_output);
    grad_sampled = t.sampled.grad();
  } else {
    const Index ds = cfg_.d_s, dr = cfg_.d_r;
    t.concat.zero_grad();
    l2_normalize_backward(t.concat, t.output, grad_output);
    Eigen::Map<const RowMatrix<Scalar>> gc(t.concat.grad().data(), n, ds + dr);
    Array grad_cnn(n * ds), grad_ref(n * dr);
    Eigen::Map<RowMatrix<Scalar>>(grad_cnn.data(), n, ds) = gc.leftCols(ds);
    Eigen::Map<RowMatrix<Scalar>>(grad_ref.data(), n, dr) = gc.rightCols(dr);

    if (cfg_.normalize_halves) {
      t.sampled.zero_grad();
      l2_normalize_backward(t.sampled, t.cnn_half, grad_cnn);
      grad_sampled = t.sampled.grad();
      t.refined.zero_grad();
      l2_normalize_backward(t.refined, t.refined_half, grad_ref);
      grad_ref = t.refined.grad();
    } else {
      grad_sampled = grad_cnn;
    }

    const auto r = static_cast<std::size_t>(refine_first_);
    t.hidden2.zero_grad();
    linear_backward(t.hidden2, params_[r + 4].value, params_[r + 5].value, grad_ref);
    t.hidden2_pre.zero_grad();
    relu_backward(t.hidden2_pre, t.hidden2.grad());
    t.hidden1.zero_grad();
    linear_backward(t.hidden1, params_[r + 2].value, params_[r + 3].value, t.hidden2_pre.grad());
    t.hidden1_pre.zero_grad();
    relu_backward(t.hidden1_pre, t.hidden1.grad());
    // y1 is a constant of the handcrafted branch; its gradient is discarded.
    t.y1.zero_grad();
    linear_backward(t.y1, params_[r].value, params_[r + 1].value, t.hidden1_pre.grad());
    t.y1.drop_grad();
  }
  t.dense.zero_grad();
  bilinear_sample_backward(t.dense, std::span<const Eigen::Vector2d>(t.grid_points), grad_sampled);
  if (!t.encoder.inputs.empty()) encoder_backward(t.encoder, t.dense.grad());
}

template class FusionModel<float>;
template class FusionModel<double>;

namespace {

Tensor<float> descriptor_tensor(const RowMatrix<float>& m) {
  Tensor<float> t(Shape{m.rows(), m.cols()});
  t.matrix(m.rows(), m.cols()) = m;
  return t;
}

DescribedFeatures run_learned(const ImageRGB& img, const FusionModel<float>& model, const DetectorConfig& det,
                              ModelVariant expected) {
  if (model.config().variant != expected) {
    throw ConfigError("model variant is " + to_string(model.config().variant) + ", expected " +
                      to_string(expected));
  }
  if (img.width() % kEncoderStride != 0 || img.height() % kEncoderStride != 0) {
    throw DimensionError("image size " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                         " is not divisible by 8");
  }
  HandcraftedFeatures g = extract_handcrafted(to_gray(img), det);
  DescribedFeatures out;
  out.keypoints = std::move(g.keypoints);
  const Index n = static_cast<Index>(out.keypoints.size());
  if (n == 0) {
    out.descriptors.resize(0, model.config().descriptor_dim());
    return out;
  }
  std::vector<Eigen::Vector2d> points;
  points.reserve(out.keypoints.size());
  for (const auto& kp : out.keypoints) points.emplace_back(kp.x, kp.y);
  const Tensor<float> image = image_tensor<float>(img);
  Tensor<float> y1;
  if (expected == ModelVariant::fused) y1 = descriptor_tensor(g.descriptors);
  const Tensor<float> desc = model.describe(image, points, y1);
  out.descriptors = desc.matrix(n, model.config().descriptor_dim());
  return out;
}

}  // namespace

DescribedFeatures extract_fused(const ImageRGB& img, const FusionModel<float>& model, const DetectorConfig& det) {
  return run_learned(img, model, det, ModelVariant::fused);
}

DescribedFeatures extract_ablation(const ImageRGB& img, const FusionModel<float>& model, const DetectorConfig& det) {
  return run_learned(img, model, det, ModelVariant::ablation);
}

DescribedFeatures extract_learned(const ImageRGB& img, const FusionModel<float>& model, const DetectorConfig& det) {
  return run_learned(img, model, det, model.config().variant);
}

void save_model(const std::filesystem::path& path, const FusionModel<float>& model, bool training) {
  Checkpoint ckpt;
  ckpt.training = training;
  ckpt.config_json = model_config_to_json(model.config());
  ckpt.parameters = model.parameters();
  write_checkpoint(path, ckpt);
}

FusionModel<float> load_model(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  return FusionModel<float>(model_config_from_json(ckpt.config_json), std::move(ckpt.parameters));
}

}  // namespace resfeat
