// resfeat command-line tool: extract, train, eval, compare, viz, selftest, synth.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "resfeat/bench.hpp"
#include "resfeat/config.hpp"
#include "resfeat/error.hpp"
#include "resfeat/feature_file.hpp"
#include "resfeat/hpatches.hpp"
#include "resfeat/image_io.hpp"
#include "resfeat/matching.hpp"
#include "resfeat/parallel.hpp"
#include "resfeat/selftest.hpp"
#include "resfeat/synthetic.hpp"
#include "resfeat/training.hpp"
#include "resfeat/visualize.hpp"

namespace fs = std::filesystem;
using namespace resfeat;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  int threads = 1;
  std::string out;
};

AppConfig load_config(const Globals& g) {
  AppConfig cfg = g.config.empty() ? AppConfig{} : load_app_config(g.config);
  if (g.seed) {
    cfg.train.seed = *g.seed;
    cfg.bench.seed = *g.seed;
  }
  return cfg;
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::vector<fs::path> list_images(const fs::path& input) {
  std::error_code ec;
  if (fs::is_regular_file(input, ec)) return {input};
  if (!fs::is_directory(input, ec)) throw DataError("input " + input.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG/PPM images in " + input.string());
  return files;
}

// The encoder needs sides divisible by 8; the crop keeps pixel coordinates.
ImageRGB crop_to_stride(const ImageRGB& img) {
  const Index w = img.width() / kEncoderStride * kEncoderStride;
  const Index h = img.height() / kEncoderStride * kEncoderStride;
  if (w == img.width() && h == img.height()) return img;
  if (w < 32 || h < 32) throw DataError("image too small for the descriptor network");
  ImageRGB out;
  for (std::size_t c = 0; c < 3; ++c) out.data[c] = img.data[c].topLeftCorner(h, w);
  return out;
}

std::optional<FusionModel<float>> load_model_for(FeatureMethod method, const std::string& path) {
  if (method == FeatureMethod::handcrafted) return std::nullopt;
  if (path.empty()) throw ConfigError("method " + to_string(method) + " requires --model <checkpoint>");
  FusionModel<float> model = load_model(path);
  const ModelVariant want = method == FeatureMethod::fused ? ModelVariant::fused : ModelVariant::ablation;
  if (model.config().variant != want) {
    throw ConfigError("checkpoint " + path + " holds a " + to_string(model.config().variant) + " model, not " +
                      to_string(method));
  }
  return model;
}

MethodFeatures features_for(const ImageRGB& img, FeatureMethod method, const FusionModel<float>* model,
                            const DetectorConfig& det) {
  return extract_method(method == FeatureMethod::handcrafted ? img : crop_to_stride(img), method, model, det);
}

int cmd_extract(const Globals& g, const std::string& input, const std::string& method_name,
                const std::string& model_path, std::optional<int> budget) {
  const AppConfig cfg = load_config(g);
  if (g.out.empty()) throw ConfigError("extract requires --out <dir>");
  const FeatureMethod method = parse_feature_method(method_name);
  const auto model = load_model_for(method, model_path);
  DetectorConfig det = cfg.detector;
  if (budget) det.max_keypoints = *budget;
  det.validate();
  const auto files = list_images(input);
  fs::create_directories(g.out);
  parallel_for(files.size(), g.threads, [&](std::size_t i) {
    const ImageRGB img = load_image(files[i]);
    const MethodFeatures mf = features_for(img, method, model ? &*model : nullptr, det);
    FeatureFile ff;
    ff.method = method;
    ff.keypoints = mf.keypoints;
    ff.descriptors = mf.descriptors;
    write_features(fs::path(g.out) / (files[i].stem().string() + ".rff"), ff);
  });
  std::cout << "extracted " << files.size() << " feature file(s) to " << g.out << '\n';
  return kOk;
}

int cmd_train(const Globals& g, const std::string& corpus, const std::string& init) {
  const AppConfig cfg = load_config(g);
  if (g.out.empty()) throw ConfigError("train requires --out <dir>");
  const std::vector<ImageRGB> images = load_corpus(corpus, cfg.train);
  const auto n_val = static_cast<std::size_t>(cfg.train.val_images);
  if (images.size() <= n_val) {
    throw DataError("corpus holds " + std::to_string(images.size()) + " images, need more than val_images = " +
                    std::to_string(n_val));
  }
  const std::span<const ImageRGB> all(images);
  const auto train = all.first(images.size() - n_val);
  const auto val_images = all.last(n_val);
  FusionModel<float> model = init.empty() ? FusionModel<float>(cfg.model, cfg.train.seed) : load_model(init);
  const auto val = make_validation_set(val_images, cfg.augment, cfg.detector, cfg.train);
  TrainOutput out{g.out, warn};
  fs::create_directories(g.out);
  std::ofstream(fs::path(g.out) / "config.json") << app_config_to_json(cfg);
  const TrainResult result = train_loop(train, val, model, cfg.train, cfg.augment, cfg.detector, out);
  std::cout << "trained " << result.steps << " step(s) on " << train.size() << " images, " << val.size()
            << " validation pairs";
  if (!result.records.empty() && result.records.back().val_ms) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), ", final val_ms %.4f", *result.records.back().val_ms);
    std::cout << buf;
  }
  std::cout << '\n';
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& dataset, const std::vector<std::string>& methods,
             const std::string& model_path, const std::string& preset, const std::string& viz_dir) {
  AppConfig cfg = load_config(g);
  if (!preset.empty()) {
    const std::uint64_t seed = cfg.bench.seed;
    cfg.bench = BenchConfig::preset(preset);
    cfg.bench.seed = seed;
  }
  cfg.bench.validate();
  const auto scenes = ingest_hpatches(dataset, warn);
  for (const auto& name : methods) {
    const FeatureMethod method = parse_feature_method(name);
    const auto model = load_model_for(method, model_path);
    EvalOptions opts;
    opts.bench = cfg.bench;
    opts.detector = cfg.detector;
    opts.log = warn;
    opts.threads = g.threads;
    if (!viz_dir.empty()) opts.viz_dir = viz_dir;
    if (model) opts.normalize_halves = model->config().normalize_halves;
    const MethodReport report = evaluate_method(scenes, method, model ? &*model : nullptr, opts);
    const std::string json = report_json(report, opts);
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s pairs=%zu Cor-1=%.3f Cor-3=%.3f Cor-5=%.3f MS=%.3f", name.c_str(),
                  report.pairs.size(), report.cor1, report.cor3, report.cor5, report.ms_mean);
    if (g.out.empty()) {
      std::cout << json;
      std::cerr << line << '\n';
    } else {
      fs::create_directories(g.out);
      std::ofstream(fs::path(g.out) / ("report_" + name + ".json"), std::ios::binary) << json;
      std::cout << line << '\n';
    }
  }
  return kOk;
}

std::string log_name(const fs::path& p) {
  if (p.filename() == "metrics.jsonl" && p.has_parent_path() && !p.parent_path().filename().empty()) {
    return p.parent_path().filename().string();
  }
  return p.stem().string();
}

int cmd_compare(const Globals& g, const std::vector<std::string>& logs) {
  if (logs.size() < 2) throw ConfigError("compare needs at least two metrics logs");
  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> parsed;
  std::vector<std::vector<std::pair<int, double>>> curves;
  for (const auto& path : logs) {
    auto records = read_metrics_log(path);
    auto curve = convergence_curve(records);
    if (curve.empty()) throw DataError("log " + path + " has no val_ms entries");
    parsed.emplace_back(log_name(path), std::move(records));
    curves.push_back(std::move(curve));
  }
  const CompareResult result = compare_logs(parsed);
  const std::string table = format_compare_table(result);
  std::cout << table;
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    save_image(fs::path(g.out) / "convergence.png", plot_curves(curves));
    std::ofstream(fs::path(g.out) / "speedup.txt", std::ios::binary) << table;
  }
  return kOk;
}

int cmd_viz(const Globals& g, const std::string& image_a, const std::string& image_b, const std::string& h_path,
            const std::string& method_name, const std::string& model_path) {
  const AppConfig cfg = load_config(g);
  if (g.out.empty()) throw ConfigError("viz requires --out <file.png>");
  const FeatureMethod method = parse_feature_method(method_name);
  const auto model = load_model_for(method, model_path);
  const ImageRGB a = load_image(image_a);
  const ImageRGB b = load_image(image_b);
  const Homography h = h_path.empty() ? Homography::identity() : read_homography(h_path);
  const MethodFeatures fa = features_for(a, method, model ? &*model : nullptr, cfg.detector);
  const MethodFeatures fb = features_for(b, method, model ? &*model : nullptr, cfg.detector);
  MatchOptions mo;
  mo.ratio_threshold = cfg.bench.ratio_threshold;
  mo.mutual = cfg.bench.mutual;
  const auto matches = match_descriptors(fa.descriptors, fb.descriptors, mo);
  std::vector<Point2> pa, pb;
  for (const auto& k : fa.keypoints) pa.emplace_back(k.x, k.y);
  for (const auto& k : fb.keypoints) pb.emplace_back(k.x, k.y);
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_image(out, visualize_matches(a, b, matches, pa, pb, h));
  std::cout << matches.size() << " matches drawn to " << g.out << '\n';
  return kOk;
}

int cmd_selftest(const Globals& g, int seeds) {
  const bool ok = run_selftest(std::cout, g.seed.value_or(0), seeds);
  return ok ? kOk : kInternal;
}

int cmd_synth(const Globals& g, const std::string& kind, const std::string& dir, int count, int width, int height) {
  const AppConfig cfg = load_config(g);
  const std::uint64_t seed = g.seed.value_or(0);
  if (count < 1 || width < 32 || height < 32) throw ConfigError("synth needs count >= 1 and sides >= 32");
  if (kind == "corpus") {
    write_synthetic_corpus(dir, count, width, height, seed);
  } else if (kind == "hpatches") {
    write_synthetic_hpatches(dir, count, width, height, seed, cfg.augment);
  } else {
    throw ConfigError("synth kind must be 'corpus' or 'hpatches'");
  }
  std::cout << "wrote " << count << ' ' << kind << " item(s) to " << dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Handcrafted + learned descriptor fusion toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--threads", g.threads, "Worker threads for per-image work")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (or file for viz)");

  std::string input, method = "handcrafted", model, init, dataset, preset, viz_dir, image_a, image_b, h_path;
  std::optional<int> budget;
  std::vector<std::string> methods{"handcrafted"}, logs;
  int seeds = 5, count = 10, width = 320, height = 240;
  std::string synth_kind, synth_dir;

  auto* extract = app.add_subcommand("extract", "Write one RFF1 feature file per image");
  extract->add_option("input", input, "Image file or directory")->required();
  extract->add_option("--method", method, "handcrafted | fused | ablation");
  extract->add_option("--model", model, "Checkpoint for learned methods");
  extract->add_option("--max-keypoints", budget, "Keypoint budget (by response rank)");

  auto* train = app.add_subcommand("train", "Train a model on an image corpus");
  train->add_option("corpus", input, "Directory of PNG/PPM images")->required();
  train->add_option("--init", init, "Start from this checkpoint");

  auto* eval = app.add_subcommand("eval", "Benchmark methods on an HPatches-layout dataset");
  eval->add_option("dataset", dataset, "HPatches root")->required();
  eval->add_option("--method", methods, "Methods to evaluate")->delimiter(',');
  eval->add_option("--model", model, "Checkpoint for learned methods");
  eval->add_option("--preset", preset, "low (240x320, 300 kp) | high (480x640, 1000 kp)");
  eval->add_option("--viz", viz_dir, "Directory for match visualizations");

  auto* compare = app.add_subcommand("compare", "Convergence plot and speedup table of metrics logs");
  compare->add_option("logs", logs, "metrics.jsonl files; the first is the baseline")->required();

  auto* viz = app.add_subcommand("viz", "Draw matches between two images");
  viz->add_option("image_a", image_a)->required();
  viz->add_option("image_b", image_b)->required();
  viz->add_option("--homography", h_path, "Ground truth a -> b used for coloring");
  viz->add_option("--method", method, "handcrafted | fused | ablation");
  viz->add_option("--model", model, "Checkpoint for learned methods");

  auto* selftest = app.add_subcommand("selftest", "Gradient checks and oracle suites");
  selftest->add_option("--seeds", seeds, "Seeds per gradient check")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Generate a procedural corpus or HPatches-layout dataset");
  synth->add_option("kind", synth_kind, "corpus | hpatches")->required();
  synth->add_option("dir", synth_dir)->required();
  synth->add_option("--count", count, "Images or scenes");
  synth->add_option("--width", width);
  synth->add_option("--height", height);

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*extract) return cmd_extract(g, input, method, model, budget);
    if (*train) return cmd_train(g, input, init);
    if (*eval) return cmd_eval(g, dataset, methods, model, preset, viz_dir);
    if (*compare) return cmd_compare(g, logs);
    if (*viz) return cmd_viz(g, image_a, image_b, h_path, method, model);
    if (*selftest) return cmd_selftest(g, seeds);
    if (*synth) return cmd_synth(g, synth_kind, synth_dir, count, width, height);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
