#include "resfeat/feature_file.hpp"

#include <limits>

#include "resfeat/binary_io.hpp"
#include "resfeat/error.hpp"

namespace resfeat {

namespace {
constexpr char kMagic[4] = {'R', 'F', 'F', '1'};
}

std::string to_string(FeatureMethod m) {
  switch (m) {
    case FeatureMethod::handcrafted: return "handcrafted";
    case FeatureMethod::fused: return "fused";
    case FeatureMethod::ablation: return "ablation";
  }
  return "unknown";
}

FeatureMethod parse_feature_method(const std::string& s) {
  if (s == "handcrafted") return FeatureMethod::handcrafted;
  if (s == "fused") return FeatureMethod::fused;
  if (s == "ablation") return FeatureMethod::ablation;
  throw ConfigError("unknown method '" + s + "' (expected handcrafted, fused or ablation)");
}

std::string serialize_features(const FeatureFile& f) {
  const Index n = static_cast<Index>(f.keypoints.size());
  if (f.descriptors.rows() != n) {
    throw DimensionError("feature file: " + std::to_string(n) + " keypoints but " +
                         std::to_string(f.descriptors.rows()) + " descriptors");
  }
  if (f.descriptors.cols() > std::numeric_limits<std::uint16_t>::max()) {
    throw DimensionError("feature file: descriptor dim exceeds 65535");
  }
  binary::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(n));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(f.descriptors.cols()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(f.method));
  for (Index i = 0; i < n; ++i) {
    const Keypoint& kp = f.keypoints[static_cast<std::size_t>(i)];
    w.put<float>(static_cast<float>(kp.x));
    w.put<float>(static_cast<float>(kp.y));
    w.put<float>(static_cast<float>(kp.sigma));
    w.put<float>(static_cast<float>(kp.orientation));
    w.put<float>(static_cast<float>(kp.response));
    for (Index d = 0; d < f.descriptors.cols(); ++d) w.put<float>(f.descriptors(i, d));
  }
  return w.bytes();
}

FeatureFile deserialize_features(const std::string& bytes) {
  binary::Reader r(bytes);
  const std::string magic(r.take(4), 4);
  if (magic != std::string(kMagic, 4)) throw FormatError("feature file: bad magic");
  const auto n = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint16_t>();
  const auto tag = r.get<std::uint8_t>();
  if (tag > 2) throw FormatError("feature file: unknown method tag " + std::to_string(tag));
  const std::size_t per_point = (5 + static_cast<std::size_t>(dim)) * sizeof(float);
  if (r.remaining() != static_cast<std::size_t>(n) * per_point) {
    throw FormatError("feature file: payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(static_cast<std::size_t>(n) * per_point));
  }
  FeatureFile f;
  f.method = static_cast<FeatureMethod>(tag);
  f.keypoints.resize(n);
  f.descriptors.resize(n, dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    Keypoint& kp = f.keypoints[i];
    kp.x = r.get<float>();
    kp.y = r.get<float>();
    kp.sigma = r.get<float>();
    kp.orientation = r.get<float>();
    kp.response = r.get<float>();
    for (Index d = 0; d < dim; ++d) f.descriptors(static_cast<Index>(i), d) = r.get<float>();
  }
  return f;
}

void write_features(const std::filesystem::path& path, const FeatureFile& f) {
  binary::write_file(path.string(), serialize_features(f));
}

FeatureFile read_features(const std::filesystem::path& path) {
  return deserialize_features(binary::read_file(path.string()));
}

}  // namespace resfeat
