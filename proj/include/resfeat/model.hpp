#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "resfeat/image.hpp"
#include "resfeat/sift.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

enum class ModelVariant { fused, ablation };

std::string to_string(ModelVariant v);
ModelVariant parse_model_variant(const std::string& s);

struct ModelConfig {
  ModelVariant variant = ModelVariant::fused;
  int d_s = 128;  // CNN descriptor channels (256 for the ablation head)
  int d_r = 128;  // refined handcrafted dim
  int d_h = 128;  // handcrafted input dim
  std::vector<int> encoder_channels{64, 64, 64, 64, 128, 128, 128, 128};
  int head_channels = 256;
  int refine_hidden = 256;
  bool small_mode = false;  // halves encoder and head widths
  /// L2-normalize the sampled CNN half and the refined half before concatenation.
  bool normalize_halves = true;

  static ModelConfig fused();
  static ModelConfig ablation();

  /// Final descriptor length: d_s + d_r for fused, d_s for ablation.
  int descriptor_dim() const;
  std::vector<int> effective_encoder_channels() const;
  int effective_head_channels() const;
  void validate() const;
};

inline constexpr int kEncoderStride = 8;

/// Dense-grid coordinate of an image pixel: (p + 0.5) / 8 - 0.5 per axis,
/// clamped to [0, Wc - 1] x [0, Hc - 1].
Eigen::Vector2d pixel_to_grid(const Eigen::Vector2d& p, Index grid_width, Index grid_height);

template <typename Scalar>
struct EncoderTrace {
  // Input of every layer in execution order (the image first).
  std::vector<Tensor<Scalar>> inputs;
};

template <typename Scalar>
struct DescriptorTrace {
  EncoderTrace<Scalar> encoder;
  Tensor<Scalar> dense;
  std::vector<Eigen::Vector2d> grid_points;
  Tensor<Scalar> sampled;      // N x d_s
  Tensor<Scalar> cnn_half;     // N x d_s, normalized when normalize_halves
  Tensor<Scalar> y1;           // N x d_h
  Tensor<Scalar> hidden1_pre, hidden1, hidden2_pre, hidden2;
  Tensor<Scalar> refined;      // N x d_r
  Tensor<Scalar> refined_half;
  Tensor<Scalar> concat;       // N x (d_s + d_r)
  Tensor<Scalar> output;
};

/// Trimmed encoder + descriptor head (h) and refine MLP (f) with explicit
/// forward traces for backpropagation.
template <typename Scalar>
class FusionModel {
 public:
  FusionModel() = default;
  /// He-normal weights, zero biases.
  FusionModel(const ModelConfig& cfg, std::uint64_t seed);
  /// Adopts existing parameters; names and shapes must match the layout of cfg.
  FusionModel(const ModelConfig& cfg, std::vector<Parameter<Scalar>> params);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<Parameter<Scalar>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const noexcept { return params_; }
  Parameter<Scalar>& parameter(const std::string& name);
  const Parameter<Scalar>& parameter(const std::string& name) const;
  Index parameter_count() const;
  Index refine_parameter_count() const;

  void zero_grad();

  /// image 3 x H x W (H, W divisible by 8) -> d_s x H/8 x W/8.
  Tensor<Scalar> encoder_forward(const Tensor<Scalar>& image, EncoderTrace<Scalar>* trace = nullptr) const;
  /// Accumulates parameter gradients (and the image gradient into trace.inputs[0]).
  void encoder_backward(EncoderTrace<Scalar>& trace, const typename Tensor<Scalar>::Array& grad_dense);

  /// Bilinear samples at image-frame points, normalized when normalize_halves.
  Tensor<Scalar> sample_cnn(const Tensor<Scalar>& dense, std::span<const Eigen::Vector2d> points) const;
  /// y1: N x d_h -> N x d_r (normalized when normalize_halves).
  Tensor<Scalar> refine_forward(const Tensor<Scalar>& y1) const;

  /// Final descriptors (N x descriptor_dim) at image-frame points. For the
  /// ablation variant y1 is ignored and may be empty.
  Tensor<Scalar> describe(const Tensor<Scalar>& image, std::span<const Eigen::Vector2d> points,
                          const Tensor<Scalar>& y1, DescriptorTrace<Scalar>* trace = nullptr) const;
  /// Same, reusing an already computed dense map.
  Tensor<Scalar> describe_dense(const Tensor<Scalar>& dense, std::span<const Eigen::Vector2d> points,
                                const Tensor<Scalar>& y1, DescriptorTrace<Scalar>* trace = nullptr) const;
  /// Backpropagates dL/d(output) through head sampling, refine MLP and encoder.
  void describe_backward(DescriptorTrace<Scalar>& trace, const typename Tensor<Scalar>::Array& grad_output);

  template <typename Other>
  FusionModel<Other> cast() const {
    std::vector<Parameter<Other>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.emplace_back(p.name, p.value.template cast<Other>());
    return FusionModel<Other>(cfg_, std::move(out));
  }

 private:
  struct Layer {
    enum Kind { conv, relu, pool } kind;
    int weight = -1;  // parameter index; bias is weight + 1
  };
  void build_layout(std::vector<std::pair<std::string, Shape>>& specs);
  int index_of(const std::string& name) const;

  ModelConfig cfg_;
  std::vector<Parameter<Scalar>> params_;
  std::vector<Layer> layers_;
  int refine_first_ = -1;  // index of refine.fc1.weight, -1 for ablation
};

/// Fused: refine(y1) ++ sampled CNN half. Ablation: sampled 256-d only.
struct DescribedFeatures {
  std::vector<Keypoint> keypoints;
  RowMatrix<float> descriptors;
};

/// g on the grayscale image, h on RGB, sample, refine, fuse.
DescribedFeatures extract_fused(const ImageRGB& img, const FusionModel<float>& model,
                                const DetectorConfig& det);
/// g supplies keypoints only; the 256-channel head is sampled and normalized.
DescribedFeatures extract_ablation(const ImageRGB& img, const FusionModel<float>& model,
                                   const DetectorConfig& det);
/// Dispatches on model.config().variant.
DescribedFeatures extract_learned(const ImageRGB& img, const FusionModel<float>& model,
                                  const DetectorConfig& det);

void save_model(const std::filesystem::path& path, const FusionModel<float>& model, bool training);
FusionModel<float> load_model(const std::filesystem::path& path);

extern template class FusionModel<float>;
extern template class FusionModel<double>;

}  // namespace resfeat
