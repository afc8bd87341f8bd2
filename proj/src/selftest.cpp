#include "resfeat/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "resfeat/augment.hpp"
#include "resfeat/feature_file.hpp"
#include "resfeat/layers.hpp"
#include "resfeat/matching.hpp"
#include "resfeat/metrics.hpp"
#include "resfeat/model.hpp"
#include "resfeat/optim.hpp"
#include "resfeat/ransac.hpp"
#include "resfeat/synthetic.hpp"
#include "resfeat/training.hpp"

namespace resfeat {

namespace {

using T = Tensor<double>;
using Arr = T::Array;

// Model checks use a smaller step so that ReLU and max-pool kinks are
// rarely straddled by a probe.
constexpr double kOpStep = 1e-5;
constexpr double kModelStep = 1e-6;
constexpr Index kProbesPerParam = 12;

T random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

std::vector<Eigen::Vector2d> random_points(Index n, double max_x, double max_y, Rng& rng) {
  std::uniform_real_distribution<double> ux(0.0, max_x), uy(0.0, max_y);
  std::vector<Eigen::Vector2d> pts;
  for (Index i = 0; i < n; ++i) pts.emplace_back(ux(rng), uy(rng));
  return pts;
}

T random_unit_rows(Index n, Index d, Rng& rng) {
  T t = random_tensor(Shape{n, d}, rng, 0.0, 1.0);
  auto m = t.matrix(n, d);
  m.rowwise().normalize();
  return t;
}

ModelConfig tiny_config(ModelVariant variant) {
  ModelConfig cfg = variant == ModelVariant::fused ? ModelConfig::fused() : ModelConfig::ablation();
  cfg.encoder_channels = {4, 4, 4, 4, 6, 6, 6, 6};
  cfg.head_channels = 8;
  cfg.refine_hidden = 16;
  return cfg;
}

// Zero biases (the training init) put ReLU inputs exactly on the kink
// wherever a whole receptive field is dead; checks need a smooth point.
FusionModel<double> check_model(ModelVariant variant, std::uint64_t seed, Rng& rng) {
  FusionModel<double> model(tiny_config(variant), seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& p : model.parameters()) {
    if (p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0) {
      for (Index i = 0; i < p.value.size(); ++i) p.value[i] = u(rng);
    }
  }
  return model;
}

class Suite {
 public:
  explicit Suite(int n_seeds) : n_seeds_(n_seeds) {}

  void record(const std::string& name, double tol, const GradCheckResult& r) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
    if (it == entries_.end()) {
      entries_.push_back({name, 0, 0.0, tol, true});
      it = entries_.end() - 1;
    }
    it->max_error = std::max(it->max_error, r.max_relative_error);
    it->passed = it->passed && r.passed;
  }

  std::vector<GradSuiteEntry> finish() {
    for (auto& e : entries_) e.seeds = n_seeds_;
    return entries_;
  }

 private:
  int n_seeds_;
  std::vector<GradSuiteEntry> entries_;
};

// Checks d(sum(c * f(p)))/dp for one tensor p that f reads through `slot`.
GradCheckResult check_slot(T& slot, const std::function<double()>& loss, const std::function<Arr()>& gradient,
                           double tol, double step, Index probes) {
  const T saved = slot;
  auto loss_at = [&](const T& x) {
    slot.values() = x.values();
    return loss();
  };
  auto grad_at = [&](const T& x) {
    slot.values() = x.values();
    return gradient();
  };
  const GradCheckResult r = grad_check(loss_at, grad_at, saved, tol, step, probes);
  slot.values() = saved.values();
  return r;
}

void layer_checks(Suite& suite, Rng& rng) {
  const double tol = kPerOpTolerance;
  // conv2d
  {
    T input = random_tensor({2, 5, 6}, rng);
    T weights = random_tensor({3, 2, 3, 3}, rng);
    T bias = random_tensor({3}, rng);
    const Arr c = random_tensor({3, 5, 6}, rng).values();
    auto loss = [&] { return (conv2d(input, weights, bias).values() * c).sum(); };
    auto grad_of = [&](T& which) {
      return [&, w = &which] {
        input.zero_grad();
        weights.zero_grad();
        bias.zero_grad();
        conv2d_backward(input, weights, bias, c);
        return Arr(w->grad());
      };
    };
    suite.record("conv2d/input", tol, check_slot(input, loss, grad_of(input), tol, kOpStep, -1));
    suite.record("conv2d/weights", tol, check_slot(weights, loss, grad_of(weights), tol, kOpStep, -1));
    suite.record("conv2d/bias", tol, check_slot(bias, loss, grad_of(bias), tol, kOpStep, -1));
  }
  // maxpool2x2
  {
    T input = random_tensor({2, 6, 8}, rng);
    const Arr c = random_tensor({2, 3, 4}, rng).values();
    auto loss = [&] { return (maxpool2x2(input).values() * c).sum(); };
    auto grad = [&] {
      input.zero_grad();
      maxpool2x2_backward(input, c);
      return Arr(input.grad());
    };
    suite.record("maxpool2x2/input", tol, check_slot(input, loss, grad, tol, kOpStep, -1));
  }
  // linear
  {
    T input = random_tensor({4, 5}, rng);
    T weights = random_tensor({3, 5}, rng);
    T bias = random_tensor({3}, rng);
    const Arr c = random_tensor({4, 3}, rng).values();
    auto loss = [&] { return (linear(input, weights, bias).values() * c).sum(); };
    auto grad_of = [&](T& which) {
      return [&, w = &which] {
        input.zero_grad();
        weights.zero_grad();
        bias.zero_grad();
        linear_backward(input, weights, bias, c);
        return Arr(w->grad());
      };
    };
    suite.record("linear/input", tol, check_slot(input, loss, grad_of(input), tol, kOpStep, -1));
    suite.record("linear/weights", tol, check_slot(weights, loss, grad_of(weights), tol, kOpStep, -1));
    suite.record("linear/bias", tol, check_slot(bias, loss, grad_of(bias), tol, kOpStep, -1));
  }
  // relu, away from the kink
  {
    T input = random_tensor({3, 7}, rng);
    for (Index i = 0; i < input.size(); ++i) {
      if (std::abs(input[i]) < 0.05) input[i] += 0.1;
    }
    const Arr c = random_tensor({3, 7}, rng).values();
    auto loss = [&] { return (relu(input).values() * c).sum(); };
    auto grad = [&] {
      input.zero_grad();
      relu_backward(input, c);
      return Arr(input.grad());
    };
    suite.record("relu/input", tol, check_slot(input, loss, grad, tol, kOpStep, -1));
  }
  // l2_normalize, rows and a single vector
  for (const Shape& shape : {Shape{4, 6}, Shape{9}}) {
    T input = random_tensor(shape, rng);
    const Arr c = random_tensor(shape, rng).values();
    auto loss = [&] { return (l2_normalize(input).values() * c).sum(); };
    auto grad = [&] {
      input.zero_grad();
      const T out = l2_normalize(input);
      l2_normalize_backward(input, out, c);
      return Arr(input.grad());
    };
    suite.record("l2_normalize/input", tol, check_slot(input, loss, grad, tol, kOpStep, -1));
  }
  // bilinear_sample
  {
    T dense = random_tensor({3, 4, 5}, rng);
    const auto pts = random_points(7, 4.0, 3.0, rng);
    const Arr c = random_tensor({7, 3}, rng).values();
    auto loss = [&] { return (bilinear_sample(dense, pts).values() * c).sum(); };
    auto grad = [&] {
      dense.zero_grad();
      bilinear_sample_backward(dense, pts, c);
      return Arr(dense.grad());
    };
    suite.record("bilinear_sample/dense", tol, check_slot(dense, loss, grad, tol, kOpStep, -1));
  }
  // triplet loss on descriptor rows
  {
    const Index n = 6, d = 8;
    T a = random_tensor({n, d}, rng);
    T b = random_tensor({n, d}, rng);
    TripletBatch batch;
    for (Index i = 0; i < n; ++i) batch.push_back({i, i, (i + 2) % n});
    auto loss = [&] { return triplet_loss_sum<double>(a, b, batch, 2.0, nullptr, nullptr); };
    auto grad_of = [&](bool want_a) {
      return [&, want_a] {
        Arr ga = Arr::Zero(a.size()), gb = Arr::Zero(b.size());
        triplet_loss_sum<double>(a, b, batch, 2.0, &ga, &gb);
        return want_a ? ga : gb;
      };
    };
    suite.record("triplet_loss/anchor", tol, check_slot(a, loss, grad_of(true), tol, kOpStep, -1));
    suite.record("triplet_loss/candidates", tol, check_slot(b, loss, grad_of(false), tol, kOpStep, -1));
  }
}

void model_checks(Suite& suite, Rng& rng, std::uint64_t model_seed) {
  const double tol = kEndToEndTolerance;
  // Encoder alone: loss = sum of the dense outputs.
  {
    FusionModel<double> model = check_model(ModelVariant::fused, model_seed, rng);
    T image = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    auto loss = [&] { return model.encoder_forward(image).values().sum(); };
    auto backward = [&] {
      model.zero_grad();
      EncoderTrace<double> trace;
      const T out = model.encoder_forward(image, &trace);
      model.encoder_backward(trace, Arr::Ones(out.size()));
      return trace;
    };
    suite.record("encoder/input", tol,
                 check_slot(image, loss, [&] { return Arr(backward().inputs[0].grad()); }, tol, kModelStep,
                            kProbesPerParam * 4));
    for (auto& p : model.parameters()) {
      if (p.name.rfind("encoder.", 0) != 0 && p.name.rfind("head.", 0) != 0) continue;
      auto grad = [&, param = &p] {
        backward();
        return Arr(param->value.grad());
      };
      suite.record("encoder/parameters", tol, check_slot(p.value, loss, grad, tol, kModelStep, kProbesPerParam));
    }
  }
  // Full describe path of both variants: loss = sum(c * descriptors).
  for (ModelVariant variant : {ModelVariant::fused, ModelVariant::ablation}) {
    FusionModel<double> model = check_model(variant, model_seed + 1, rng);
    const std::string tag = "describe_" + to_string(variant);
    T image = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    const auto pts = random_points(5, 15.0, 15.0, rng);
    const T y1 = random_unit_rows(5, kHandcraftedDim, rng);
    const Arr c = random_tensor({5, model.config().descriptor_dim()}, rng).values();
    auto loss = [&] { return (model.describe(image, pts, y1).values() * c).sum(); };
    auto backward = [&] {
      model.zero_grad();
      DescriptorTrace<double> trace;
      model.describe(image, pts, y1, &trace);
      model.describe_backward(trace, c);
      return trace;
    };
    suite.record(tag + "/input", tol,
                 check_slot(image, loss, [&] { return Arr(backward().encoder.inputs[0].grad()); }, tol,
                            kModelStep, kProbesPerParam * 4));
    for (auto& p : model.parameters()) {
      auto grad = [&, param = &p] {
        backward();
        return Arr(param->value.grad());
      };
      suite.record(tag + "/parameters", tol, check_slot(p.value, loss, grad, tol, kModelStep, kProbesPerParam));
    }
  }
  // Training loss of a 2-pair micro-batch, triplets mined once and held fixed.
  {
    FusionModel<double> model = check_model(ModelVariant::fused, model_seed + 2, rng);
    TrainConfig cfg;
    cfg.negative_min_distance_px = 4.0;
    std::vector<PairSample<double>> samples(2);
    for (auto& s : samples) {
      s.image_a = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
      s.image_b = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
      s.points_a = random_points(6, 15.0, 15.0, rng);
      s.points_b = random_points(6, 15.0, 15.0, rng);
      s.y1_a = random_unit_rows(6, kHandcraftedDim, rng);
      s.y1_b = random_unit_rows(6, kHandcraftedDim, rng);
    }
    std::vector<TripletBatch> fixed;
    for (const auto& s : samples) fixed.push_back(pair_loss(model, s, cfg, false).batch);
    auto loss = [&] {
      double total = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        total += pair_loss(model, samples[i], cfg, false, &fixed[i]).loss_sum;
      }
      return total;
    };
    for (auto& p : model.parameters()) {
      auto grad = [&, param = &p] {
        model.zero_grad();
        for (std::size_t i = 0; i < samples.size(); ++i) pair_loss(model, samples[i], cfg, true, &fixed[i]);
        return Arr(param->value.grad());
      };
      suite.record("training_loss/parameters", tol,
                   check_slot(p.value, loss, grad, tol, kModelStep, kProbesPerParam));
    }
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

RowMatrix<float> random_descriptors(Index n, Index d, Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RowMatrix<float> m(n, d);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  m.rowwise().normalize();
  return m;
}

// Straightforward reference: full sort of every distance row and column.
std::vector<Match> reference_matches(const RowMatrix<float>& a, const RowMatrix<float>& b, double ratio) {
  const Index na = a.rows(), nb = b.rows();
  RowMatrix<double> d(na, nb);
  for (Index i = 0; i < na; ++i) {
    for (Index j = 0; j < nb; ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) {
        const double diff = static_cast<double>(a(i, k)) - static_cast<double>(b(j, k));
        s += diff * diff;
      }
      d(i, j) = std::sqrt(s);
    }
  }
  auto order = [](const auto& row) {
    std::vector<Index> idx(static_cast<std::size_t>(row.size()));
    for (Index j = 0; j < row.size(); ++j) idx[static_cast<std::size_t>(j)] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](Index x, Index y) { return row(x) < row(y); });
    return idx;
  };
  std::vector<Match> out;
  for (Index i = 0; i < na; ++i) {
    const auto row = order(d.row(i));
    const Index j = row[0];
    const double best = d(i, j);
    const double second = nb > 1 ? d(i, row[1]) : 0.0;
    if (nb > 1 && !(best < ratio * second)) continue;
    if (order(d.col(j))[0] != i) continue;
    out.push_back({i, j, best, nb > 1 && second > 0.0 ? best / second : 0.0});
  }
  return out;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(int n_seeds, std::uint64_t seed) {
  Suite suite(n_seeds);
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
    layer_checks(suite, rng);
    model_checks(suite, rng, mix_seed(seed ^ 0x6d6f64656cULL, static_cast<std::uint64_t>(s)));
  }
  return suite.finish();
}

std::vector<SelftestCheck> run_oracle_suite(std::uint64_t seed) {
  std::vector<SelftestCheck> checks;
  Rng rng(mix_seed(seed, 0x6f7261636c65ULL));

  // Matcher against the reference.
  {
    int agree = 0;
    const int trials = 5;
    for (int t = 0; t < trials; ++t) {
      const RowMatrix<float> a = random_descriptors(120, 32, rng);
      const RowMatrix<float> b = random_descriptors(140, 32, rng);
      const auto got = match_descriptors(a, b);
      const auto want = reference_matches(a, b, 0.94);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].index_a == want[i].index_a && got[i].index_b == want[i].index_b;
      }
      agree += same ? 1 : 0;
    }
    checks.push_back({"matcher/reference", std::to_string(agree) + "/" + std::to_string(trials) + " instances agree",
                      agree == trials});
  }

  // RANSAC on synthetic correspondences with outliers.
  {
    const int trials = 20;
    int good = 0;
    std::uniform_real_distribution<double> ux(0.0, 319.0), uy(0.0, 239.0);
    std::normal_distribution<double> noise(0.0, 0.5);
    AugmentConfig aug;
    for (int t = 0; t < trials; ++t) {
      const Homography h = sample_random_homography(aug, 320, 240, rng);
      std::vector<Point2> src, dst;
      for (int i = 0; i < 100; ++i) {
        const Point2 p(ux(rng), uy(rng));
        src.push_back(p);
        if (i < 30) {
          dst.emplace_back(ux(rng), uy(rng));
        } else {
          dst.push_back(h.apply(p) + Point2(noise(rng), noise(rng)));
        }
      }
      RansacOptions opts;
      opts.seed = static_cast<std::uint64_t>(t);
      const auto est = estimate_homography(src, dst, opts);
      if (est.success && corner_error(*est.h, h, 320, 240) < 1.0) ++good;
    }
    checks.push_back({"ransac/recovery", std::to_string(good) + "/" + std::to_string(trials) + " trials below 1 px",
                      good * 100 >= 95 * trials});
  }

  // Unit-norm descriptors from all three extractors.
  {
    const ImageRGB img = synthetic_texture(160, 120, mix_seed(seed, 1));
    DetectorConfig det;
    det.max_keypoints = 200;
    const HandcraftedFeatures hc = extract_handcrafted(to_gray(img), det);
    const FusionModel<float> fused(ModelConfig::fused(), mix_seed(seed, 2));
    const FusionModel<float> ablation(ModelConfig::ablation(), mix_seed(seed, 3));
    const auto f = extract_fused(img, fused, det);
    const auto ab = extract_ablation(img, ablation, det);
    double worst = 0.0;
    for (const RowMatrix<float>* m : {&hc.descriptors, &f.descriptors, &ab.descriptors}) {
      for (Index i = 0; i < m->rows(); ++i) {
        worst = std::max(worst, std::abs(m->row(i).cast<double>().norm() - 1.0));
      }
    }
    const bool dims = hc.descriptors.cols() == 128 && f.descriptors.cols() == 256 && ab.descriptors.cols() == 256;
    checks.push_back({"descriptors/unit_norm",
                      std::to_string(hc.descriptors.rows()) + " keypoints, max |norm - 1| " + fmt("%.2e", worst),
                      hc.descriptors.rows() > 0 && worst <= 1e-5 && dims});
  }

  // Feature file round trip.
  {
    FeatureFile ff;
    ff.method = FeatureMethod::fused;
    std::uniform_real_distribution<float> u(-10.0f, 10.0f);
    for (int i = 0; i < 7; ++i) {
      Keypoint kp;
      kp.x = u(rng);
      kp.y = u(rng);
      kp.sigma = std::abs(u(rng));
      kp.orientation = std::abs(u(rng));
      kp.response = u(rng);
      ff.keypoints.push_back(kp);
    }
    ff.descriptors = random_descriptors(7, 256, rng);
    const std::string bytes = serialize_features(ff);
    const FeatureFile back = deserialize_features(bytes);
    bool same = back.method == ff.method && back.keypoints.size() == ff.keypoints.size() &&
                back.descriptors == ff.descriptors && serialize_features(back) == bytes;
    FeatureFile empty;
    same = same && serialize_features(empty).size() == 11;
    checks.push_back({"feature_file/round_trip", std::to_string(bytes.size()) + " bytes", same});
  }

  // Metrics on known inputs.
  {
    const Homography shift = Homography::translation(2.0, 0.0);
    const double e0 = corner_error(shift, shift, 320, 240);
    const double e2 = corner_error(Homography::identity(), shift, 320, 240);
    const std::vector<double> errors{0.5, 2.0, 4.0, 10.0};
    const auto acc = homography_accuracy(errors, kCorThresholds);
    const bool ok = e0 == 0.0 && std::abs(e2 - 2.0) < 1e-12 && acc.at(1.0) == 0.25 && acc.at(3.0) == 0.5 &&
                    acc.at(5.0) == 0.75;
    checks.push_back({"metrics/corner_error", "shift 2 px -> " + fmt("%.3f", e2), ok});
  }
  return checks;
}

bool run_selftest(std::ostream& out, std::uint64_t seed, int n_seeds) {
  bool all = true;
  for (const auto& e : run_gradient_suite(n_seeds, seed)) {
    char line[160];
    std::snprintf(line, sizeof(line), "gradcheck %-28s seeds=%d max_rel_err=%.3e tol=%.0e %s\n", e.name.c_str(),
                  e.seeds, e.max_error, e.tolerance, e.passed ? "PASS" : "FAIL");
    out << line;
    all = all && e.passed;
  }
  for (const auto& c : run_oracle_suite(seed)) {
    out << "oracle " << c.name << ": " << c.detail << ' ' << (c.passed ? "PASS" : "FAIL") << '\n';
    all = all && c.passed;
  }
  out << (all ? "selftest PASS" : "selftest FAIL") << '\n';
  return all;
}

}  // namespace resfeat
