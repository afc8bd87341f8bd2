#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "resfeat/augment.hpp"
#include "resfeat/homography.hpp"
#include "resfeat/image.hpp"

namespace resfeat {

/// Procedural RGB texture: multi-scale value noise under random filled
/// rectangles, ellipses and triangles, lightly blurred. Pure function of the
/// arguments.
ImageRGB synthetic_texture(int width, int height, std::uint64_t seed);

struct SyntheticScene {
  std::array<ImageRGB, 6> images;
  std::array<Homography, 5> h;  // image 1 -> image k
};

/// Six views of one texture canvas: view 1 is a crop, views 2..6 are
/// homographic warps of the canvas (so their content extends past view 1)
/// with photometric changes drawn from `aug`.
SyntheticScene synthetic_scene(int width, int height, std::uint64_t seed, const AugmentConfig& aug);

/// `count` textures saved as img_XXXX.png.
void write_synthetic_corpus(const std::filesystem::path& dir, int count, int width, int height, std::uint64_t seed);

/// `count` scenes in the HPatches layout under dir/scene_XXX.
void write_synthetic_hpatches(const std::filesystem::path& dir, int count, int width, int height,
                              std::uint64_t seed, const AugmentConfig& aug);

}  // namespace resfeat
