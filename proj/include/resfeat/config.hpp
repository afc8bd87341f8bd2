#pragma once

#include <filesystem>
#include <string>

#include "resfeat/augment.hpp"
#include "resfeat/bench.hpp"
#include "resfeat/model.hpp"
#include "resfeat/sift.hpp"
#include "resfeat/training.hpp"

namespace resfeat {

/// Every tunable of the toolkit. The JSON form has one object per section:
/// {"train": {...}, "augment": {...}, "detector": {...}, "model": {...}, "bench": {...}};
/// omitted sections and keys keep their defaults, unknown keys are rejected.
struct AppConfig {
  TrainConfig train;
  AugmentConfig augment;
  DetectorConfig detector;
  ModelConfig model;
  BenchConfig bench;

  void validate() const;
};

AppConfig parse_app_config(const std::string& json_text, const AppConfig& defaults = {});
AppConfig load_app_config(const std::filesystem::path& path, const AppConfig& defaults = {});
std::string app_config_to_json(const AppConfig& cfg);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace resfeat
