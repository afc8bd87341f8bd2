#include "resfeat/config.hpp"

#include <set>

#include "json.hpp"

#include "resfeat/binary_io.hpp"
#include "resfeat/error.hpp"

namespace resfeat {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename V>
void visit(TrainConfig& c, V&& v) {
  v("batch_size", c.batch_size);
  v("learning_rate", c.learning_rate);
  v("epochs", c.epochs);
  v("max_steps", c.max_steps);
  v("margin", c.margin);
  v("negative_min_distance_px", c.negative_min_distance_px);
  v("val_interval_steps", c.val_interval_steps);
  v("checkpoint_interval", c.checkpoint_interval);
  v("seed", c.seed);
  v("width", c.width);
  v("height", c.height);
  v("val_images", c.val_images);
  v("keypoints_per_image", c.keypoints_per_image);
  v("min_correspondences", c.min_correspondences);
  v("max_pair_tries", c.max_pair_tries);
  v("border_margin", c.border_margin);
  v("val_ratio_threshold", c.val_ratio_threshold);
  v("val_ms_threshold", c.val_ms_threshold);
  v("log_wall_time", c.log_wall_time);
}

template <typename V>
void visit(AugmentConfig& c, V&& v) {
  v("noise_sigma", c.noise_sigma);
  v("brightness_delta", c.brightness_delta);
  v("contrast_range", c.contrast_range);
  v("saturation_range", c.saturation_range);
  v("hue_delta", c.hue_delta);
  v("max_scale_change", c.max_scale_change);
  v("max_rotation", c.max_rotation);
  v("max_translation", c.max_translation);
  v("max_perspective", c.max_perspective);
  v("min_coverage", c.min_coverage);
}

template <typename V>
void visit(DetectorConfig& c, V&& v) {
  v("n_octaves", c.n_octaves);
  v("scales_per_octave", c.scales_per_octave);
  v("base_sigma", c.base_sigma);
  v("assumed_blur", c.assumed_blur);
  v("contrast_threshold", c.contrast_threshold);
  v("edge_threshold", c.edge_threshold);
  v("upright", c.upright);
  v("rootsift", c.rootsift);
  v("max_keypoints", c.max_keypoints);
  v("border_margin", c.border_margin);
}

template <typename V>
void visit(ModelConfig& c, V&& v) {
  v("variant", c.variant);
  v("d_s", c.d_s);
  v("d_r", c.d_r);
  v("d_h", c.d_h);
  v("encoder_channels", c.encoder_channels);
  v("head_channels", c.head_channels);
  v("refine_hidden", c.refine_hidden);
  v("small_mode", c.small_mode);
  v("normalize_halves", c.normalize_halves);
}

template <typename V>
void visit(BenchConfig& c, V&& v) {
  v("width", c.width);
  v("height", c.height);
  v("max_keypoints", c.max_keypoints);
  v("ratio_threshold", c.ratio_threshold);
  v("mutual", c.mutual);
  v("inlier_threshold", c.inlier_threshold);
  v("ms_threshold", c.ms_threshold);
  v("ransac_max_iterations", c.ransac_max_iterations);
  v("ransac_confidence", c.ransac_confidence);
  v("seed", c.seed);
}

template <typename T>
void read_value(const json& j, const std::string& where, T& out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(where + " must be a boolean");
      out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_unsigned()) {
          out = j.get<T>();
        } else {
          if (j.get<long long>() < 0) throw ConfigError(where + " must be non-negative");
          out = static_cast<T>(j.get<long long>());
        }
      } else {
        out = j.get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError(where + " must be a number");
      out = j.get<T>();
    } else if constexpr (std::is_same_v<T, std::pair<double, double>>) {
      if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ConfigError(where + " must be a [low, high] pair");
      }
      out = {j[0].get<double>(), j[1].get<double>()};
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!j.is_array()) throw ConfigError(where + " must be an array of integers");
      std::vector<int> v;
      for (const auto& e : j) {
        if (!e.is_number_integer()) throw ConfigError(where + " must be an array of integers");
        v.push_back(e.get<int>());
      }
      out = std::move(v);
    } else if constexpr (std::is_same_v<T, ModelVariant>) {
      if (!j.is_string()) throw ConfigError(where + " must be a string");
      out = parse_model_variant(j.get<std::string>());
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <typename T>
ordered_json write_value(const T& v) {
  if constexpr (std::is_same_v<T, std::pair<double, double>>) {
    return ordered_json::array({v.first, v.second});
  } else if constexpr (std::is_same_v<T, ModelVariant>) {
    return to_string(v);
  } else {
    return ordered_json(v);
  }
}

template <typename Section>
void read_section(const json& root, const char* name, Section& section) {
  if (!root.contains(name)) return;
  const json& obj = root.at(name);
  if (!obj.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  std::set<std::string> known;
  visit(section, [&](const char* key, auto& field) {
    known.insert(key);
    if (obj.contains(key)) read_value(obj.at(key), std::string(name) + "." + key, field);
  });
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ConfigError(std::string("unknown config key '") + name + "." + key + "'");
  }
}

template <typename Section>
ordered_json write_section(Section section) {
  ordered_json obj = ordered_json::object();
  visit(section, [&](const char* key, auto& field) { obj[key] = write_value(field); });
  return obj;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

void AppConfig::validate() const {
  train.validate();
  augment.validate();
  detector.validate();
  model.validate();
  bench.validate();
}

AppConfig parse_app_config(const std::string& json_text, const AppConfig& defaults) {
  const json root = parse_json(json_text);
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  AppConfig cfg = defaults;
  static const std::set<std::string> sections{"train", "augment", "detector", "model", "bench"};
  for (const auto& [key, value] : root.items()) {
    if (!sections.count(key)) throw ConfigError("unknown config section '" + key + "'");
  }
  read_section(root, "train", cfg.train);
  read_section(root, "augment", cfg.augment);
  read_section(root, "detector", cfg.detector);
  read_section(root, "model", cfg.model);
  if (cfg.model.variant == ModelVariant::ablation && !(root.contains("model") && root["model"].contains("d_s"))) {
    cfg.model.d_s = 256;
  }
  read_section(root, "bench", cfg.bench);
  cfg.validate();
  return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path, const AppConfig& defaults) {
  std::string text;
  try {
    text = binary::read_file(path.string());
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_app_config(text, defaults);
}

std::string app_config_to_json(const AppConfig& cfg) {
  ordered_json j;
  j["train"] = write_section(cfg.train);
  j["augment"] = write_section(cfg.augment);
  j["detector"] = write_section(cfg.detector);
  j["model"] = write_section(cfg.model);
  j["bench"] = write_section(cfg.bench);
  return j.dump(2) + "\n";
}

std::string model_config_to_json(const ModelConfig& cfg) { return write_section(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& json_text) {
  const json root = parse_json(json_text);
  json wrapped = json::object();
  wrapped["model"] = root;
  ModelConfig cfg;
  read_section(wrapped, "model", cfg);
  cfg.validate();
  return cfg;
}

}  // namespace resfeat
