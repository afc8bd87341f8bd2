#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "resfeat/sift.hpp"

namespace resfeat {

enum class FeatureMethod : std::uint8_t { handcrafted = 0, fused = 1, ablation = 2 };

std::string to_string(FeatureMethod m);
FeatureMethod parse_feature_method(const std::string& s);

/// Keypoints plus a uniform-width descriptor matrix.
//
// Layout (little-endian): "RFF1" | u32 count | u16 dim | u8 method |
//   count x (f32 x, y, sigma, orientation, response, f32 descriptor[dim])
struct FeatureFile {
  FeatureMethod method = FeatureMethod::handcrafted;
  std::vector<Keypoint> keypoints;
  RowMatrix<float> descriptors;  // count x dim
};

std::string serialize_features(const FeatureFile& f);
FeatureFile deserialize_features(const std::string& bytes);
void write_features(const std::filesystem::path& path, const FeatureFile& f);
FeatureFile read_features(const std::filesystem::path& path);

}  // namespace resfeat
