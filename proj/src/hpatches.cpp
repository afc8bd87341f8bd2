#include "resfeat/hpatches.hpp"

#include <algorithm>
#include <optional>

#include "resfeat/error.hpp"
#include "resfeat/image_io.hpp"

namespace resfeat {

namespace {

std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir, int index) {
  for (const char* ext : {".ppm", ".png"}) {
    const auto p = dir / (std::to_string(index) + ext);
    std::error_code ec;
    if (std::filesystem::is_regular_file(p, ec)) return p;
  }
  return std::nullopt;
}

}  // namespace

std::vector<HpatchesScene> ingest_hpatches(const std::filesystem::path& root,
                                           const std::function<void(const std::string&)>& warn) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) throw DataError("dataset directory " + root.string() + " not found");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<HpatchesScene> scenes;
  for (const auto& dir : dirs) {
    const std::string name = dir.filename().string();
    auto skip = [&](const std::string& why) {
      if (warn) warn("scene " + name + " skipped: " + why);
    };
    HpatchesScene scene{name, {}, {Homography(), Homography(), Homography(), Homography(), Homography()}};
    bool ok = true;
    for (int i = 1; i <= 6 && ok; ++i) {
      const auto img = find_image(dir, i);
      if (!img) {
        skip("missing image " + std::to_string(i));
        ok = false;
      } else {
        scene.images[static_cast<std::size_t>(i - 1)] = *img;
      }
    }
    for (int k = 2; k <= 6 && ok; ++k) {
      const auto hp = dir / ("H_1_" + std::to_string(k));
      if (!std::filesystem::is_regular_file(hp, ec)) {
        skip("missing H_1_" + std::to_string(k));
        ok = false;
        break;
      }
      try {
        scene.h[static_cast<std::size_t>(k - 2)] = read_homography(hp);
      } catch (const Error& e) {
        skip("H_1_" + std::to_string(k) + ": " + e.what());
        ok = false;
      }
    }
    if (ok) scenes.push_back(std::move(scene));
  }
  if (scenes.empty()) throw DataError("no valid scene under " + root.string());
  return scenes;
}

std::vector<ScenePair> enumerate_pairs(const std::vector<HpatchesScene>& scenes) {
  std::vector<ScenePair> out;
  out.reserve(scenes.size() * 5);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (int k = 2; k <= 6; ++k) out.push_back({s, k});
  }
  return out;
}

void write_scene(const std::filesystem::path& dir, const std::array<ImageRGB, 6>& images,
                 const std::array<Homography, 5>& h) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 6; ++i) {
    save_image(dir / (std::to_string(i + 1) + ".ppm"), images[static_cast<std::size_t>(i)]);
  }
  for (int k = 2; k <= 6; ++k) write_homography(dir / ("H_1_" + std::to_string(k)), h[static_cast<std::size_t>(k - 2)]);
}

}  // namespace resfeat
