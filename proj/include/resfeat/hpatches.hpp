#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "resfeat/homography.hpp"
#include "resfeat/image.hpp"

namespace resfeat {

/// One scene: image 1 is the reference, h[k - 2] maps image 1 to image k.
struct HpatchesScene {
  std::string name;
  std::array<std::filesystem::path, 6> images;
  std::array<Homography, 5> h;
};

struct ScenePair {
  std::size_t scene = 0;  // index into the scene list
  int target = 2;         // 2..6
};

/// Scans per-scene subdirectories holding 1..6.ppm (or .png) and H_1_2 ..
/// H_1_6. Malformed scenes are reported through `warn` and skipped; scenes
/// are sorted by name. Throws DataError when no valid scene remains.
std::vector<HpatchesScene> ingest_hpatches(const std::filesystem::path& root,
                                           const std::function<void(const std::string&)>& warn = {});

/// 5 pairs (1, k) per scene, scene-major.
std::vector<ScenePair> enumerate_pairs(const std::vector<HpatchesScene>& scenes);

/// Writes a scene in the layout ingest_hpatches reads (PPM images).
void write_scene(const std::filesystem::path& dir, const std::array<ImageRGB, 6>& images,
                 const std::array<Homography, 5>& h);

}  // namespace resfeat
