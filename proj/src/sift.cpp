#include "resfeat/sift.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "resfeat/error.hpp"

namespace resfeat {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kImageBorder = 5;        // octave pixels skipped by the extremum search
constexpr int kMaxInterpSteps = 5;
constexpr int kOrientationBins = 36;
constexpr double kOrientationSigmaFactor = 1.5;
constexpr double kOrientationRadiusFactor = 3.0 * kOrientationSigmaFactor;
constexpr double kOrientationPeakRatio = 0.8;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescCellFactor = 3.0;
constexpr float kDescClamp = 0.2f;
constexpr int kMinOctaveSide = 8;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

struct Derivatives {
  Eigen::Vector3d gradient;
  Eigen::Matrix3d hessian;
};

Derivatives dog_derivatives(const Plane& prev, const Plane& cur, const Plane& next, Index r, Index c) {
  Derivatives d;
  d.gradient << (cur(r, c + 1) - cur(r, c - 1)) * 0.5, (cur(r + 1, c) - cur(r - 1, c)) * 0.5,
      (next(r, c) - prev(r, c)) * 0.5;
  const double v2 = 2.0 * cur(r, c);
  const double dxx = cur(r, c + 1) + cur(r, c - 1) - v2;
  const double dyy = cur(r + 1, c) + cur(r - 1, c) - v2;
  const double dss = next(r, c) + prev(r, c) - v2;
  const double dxy = (cur(r + 1, c + 1) - cur(r + 1, c - 1) - cur(r - 1, c + 1) + cur(r - 1, c - 1)) * 0.25;
  const double dxs = (next(r, c + 1) - next(r, c - 1) - prev(r, c + 1) + prev(r, c - 1)) * 0.25;
  const double dys = (next(r + 1, c) - next(r - 1, c) - prev(r + 1, c) + prev(r - 1, c)) * 0.25;
  d.hessian << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
  return d;
}

bool is_extremum(const ScaleSpace::Octave& oct, int layer, Index r, Index c, float threshold) {
  const float val = oct.dogs[static_cast<std::size_t>(layer)](r, c);
  if (std::abs(val) <= threshold) return false;
  const bool is_max = val > 0;
  for (int dl = -1; dl <= 1; ++dl) {
    const Plane& img = oct.dogs[static_cast<std::size_t>(layer + dl)];
    for (Index dr = -1; dr <= 1; ++dr) {
      for (Index dc = -1; dc <= 1; ++dc) {
        if (dl == 0 && dr == 0 && dc == 0) continue;
        const float n = img(r + dr, c + dc);
        if (is_max ? n > val : n < val) return false;
      }
    }
  }
  return true;
}

std::optional<Keypoint> refine_extremum(const ScaleSpace& space, const DetectorConfig& cfg,
                                        int octave, int layer, Index r, Index c) {
  const auto& oct = space.octaves[static_cast<std::size_t>(octave)];
  const int s = cfg.scales_per_octave;
  const Index rows = oct.dogs[0].rows(), cols = oct.dogs[0].cols();
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  int step = 0;
  for (; step < kMaxInterpSteps; ++step) {
    const auto& prev = oct.dogs[static_cast<std::size_t>(layer - 1)];
    const auto& cur = oct.dogs[static_cast<std::size_t>(layer)];
    const auto& next = oct.dogs[static_cast<std::size_t>(layer + 1)];
    const Derivatives d = dog_derivatives(prev, cur, next, r, c);
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(d.hessian);
    if (!lu.isInvertible()) return std::nullopt;
    offset = -lu.solve(d.gradient);
    if ((offset.array().abs() < 0.5).all()) break;
    if ((offset.array().abs() > 1e6).any()) return std::nullopt;
    c += static_cast<Index>(std::lround(offset.x()));
    r += static_cast<Index>(std::lround(offset.y()));
    layer += static_cast<int>(std::lround(offset.z()));
    if (layer < 1 || layer > s || c < kImageBorder || c >= cols - kImageBorder ||
        r < kImageBorder || r >= rows - kImageBorder) {
      return std::nullopt;
    }
  }
  if (step >= kMaxInterpSteps) return std::nullopt;

  const auto& prev = oct.dogs[static_cast<std::size_t>(layer - 1)];
  const auto& cur = oct.dogs[static_cast<std::size_t>(layer)];
  const auto& next = oct.dogs[static_cast<std::size_t>(layer + 1)];
  const Derivatives d = dog_derivatives(prev, cur, next, r, c);
  const double contrast = cur(r, c) + 0.5 * d.gradient.dot(offset);
  const double response = std::abs(contrast) * s;
  if (response < cfg.contrast_threshold) return std::nullopt;

  const double dxx = d.hessian(0, 0), dyy = d.hessian(1, 1), dxy = d.hessian(0, 1);
  const double trace = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double edge = cfg.edge_threshold;
  if (det <= 0.0 || trace * trace * edge >= (edge + 1.0) * (edge + 1.0) * det) return std::nullopt;

  const double octave_scale = std::ldexp(1.0, octave);
  Keypoint kp;
  kp.x = (static_cast<double>(c) + offset.x()) * octave_scale;
  kp.y = (static_cast<double>(r) + offset.y()) * octave_scale;
  kp.sigma = cfg.base_sigma * std::pow(2.0, (layer + offset.z()) / s) * octave_scale;
  kp.response = response;
  kp.octave = octave;
  kp.layer = layer;
  return kp;
}

}  // namespace

DetectorConfig DetectorConfig::low_recall() {
  DetectorConfig cfg;
  cfg.contrast_threshold = 0.005;
  return cfg;
}

void DetectorConfig::validate() const {
  if (n_octaves < 1) throw ConfigError("detector.n_octaves must be >= 1");
  if (scales_per_octave < 1) throw ConfigError("detector.scales_per_octave must be >= 1");
  if (!(base_sigma > assumed_blur && assumed_blur >= 0.0)) {
    throw ConfigError("detector.base_sigma must exceed assumed_blur");
  }
  if (!(contrast_threshold > 0.0)) throw ConfigError("detector.contrast_threshold must be > 0");
  if (!(edge_threshold > 0.0)) throw ConfigError("detector.edge_threshold must be > 0");
  if (max_keypoints < 1) throw ConfigError("detector.max_keypoints must be >= 1");
  if (!(border_margin >= 0.0)) throw ConfigError("detector.border_margin must be >= 0");
}

double ScaleSpace::level_sigma(double layer) const {
  return base_sigma * std::pow(2.0, layer / scales_per_octave);
}

ScaleSpace build_scale_space(const ImageGray& img, const DetectorConfig& cfg) {
  cfg.validate();
  if (std::min(img.width(), img.height()) < 32) {
    throw DataError("build_scale_space: image " + std::to_string(img.width()) + "x" +
                    std::to_string(img.height()) + " is smaller than 32 px");
  }
  const int s = cfg.scales_per_octave;
  ScaleSpace space;
  space.scales_per_octave = s;
  space.base_sigma = cfg.base_sigma;
  space.width = img.width();
  space.height = img.height();

  std::vector<double> increments(static_cast<std::size_t>(s + 3));
  increments[0] = cfg.base_sigma;
  const double k = std::pow(2.0, 1.0 / s);
  for (int i = 1; i < s + 3; ++i) {
    const double prev = cfg.base_sigma * std::pow(k, i - 1);
    const double total = prev * k;
    increments[static_cast<std::size_t>(i)] = std::sqrt(total * total - prev * prev);
  }

  const double initial = std::sqrt(cfg.base_sigma * cfg.base_sigma - cfg.assumed_blur * cfg.assumed_blur);
  Index side = std::min(img.width(), img.height());
  for (int o = 0; o < cfg.n_octaves; ++o) {
    if (o > 0 && side < kMinOctaveSide) break;
    ScaleSpace::Octave oct;
    if (o == 0) {
      oct.gaussians.push_back(gaussian_blur(img.data, initial));
    } else {
      oct.gaussians.push_back(downsample2(space.octaves.back().gaussians[static_cast<std::size_t>(s)]));
    }
    for (int i = 1; i < s + 3; ++i) {
      oct.gaussians.push_back(gaussian_blur(oct.gaussians.back(), increments[static_cast<std::size_t>(i)]));
    }
    for (int i = 0; i + 1 < s + 3; ++i) {
      oct.dogs.push_back(oct.gaussians[static_cast<std::size_t>(i + 1)] - oct.gaussians[static_cast<std::size_t>(i)]);
    }
    space.octaves.push_back(std::move(oct));
    side = (side + 1) / 2;
  }
  return space;
}

std::vector<Keypoint> detect_keypoints(const ScaleSpace& space, const DetectorConfig& cfg) {
  cfg.validate();
  const int s = cfg.scales_per_octave;
  const float threshold = static_cast<float>(0.5 * cfg.contrast_threshold / s);
  std::vector<Keypoint> keypoints;
  for (int o = 0; o < static_cast<int>(space.octaves.size()); ++o) {
    const auto& oct = space.octaves[static_cast<std::size_t>(o)];
    const Index rows = oct.dogs[0].rows(), cols = oct.dogs[0].cols();
    for (int layer = 1; layer <= s; ++layer) {
      for (Index r = kImageBorder; r < rows - kImageBorder; ++r) {
        for (Index c = kImageBorder; c < cols - kImageBorder; ++c) {
          if (!is_extremum(oct, layer, r, c, threshold)) continue;
          if (auto kp = refine_extremum(space, cfg, o, layer, r, c)) keypoints.push_back(*kp);
        }
      }
    }
  }
  std::stable_sort(keypoints.begin(), keypoints.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  return keypoints;
}

std::vector<double> dominant_orientations(const Plane& level, double x, double y, double scale) {
  const Index px = static_cast<Index>(std::lround(x));
  const Index py = static_cast<Index>(std::lround(y));
  const Index radius = static_cast<Index>(std::lround(kOrientationRadiusFactor * scale));
  const double sigma = kOrientationSigmaFactor * scale;
  const double expf_scale = -1.0 / (2.0 * sigma * sigma);
  std::array<double, kOrientationBins> raw{};
  for (Index i = -radius; i <= radius; ++i) {
    const Index yy = py + i;
    if (yy <= 0 || yy >= level.rows() - 1) continue;
    for (Index j = -radius; j <= radius; ++j) {
      const Index xx = px + j;
      if (xx <= 0 || xx >= level.cols() - 1) continue;
      const double dx = level(yy, xx + 1) - level(yy, xx - 1);
      const double dy = level(yy + 1, xx) - level(yy - 1, xx);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag == 0.0) continue;
      const double weight = std::exp(static_cast<double>(i * i + j * j) * expf_scale);
      const double angle = wrap_angle(std::atan2(dy, dx));
      int bin = static_cast<int>(std::lround(angle * kOrientationBins / kTwoPi));
      bin = (bin % kOrientationBins + kOrientationBins) % kOrientationBins;
      raw[static_cast<std::size_t>(bin)] += weight * mag;
    }
  }
  std::array<double, kOrientationBins> hist{};
  auto at = [&raw](int i) { return raw[static_cast<std::size_t>((i % kOrientationBins + kOrientationBins) % kOrientationBins)]; };
  for (int i = 0; i < kOrientationBins; ++i) {
    hist[static_cast<std::size_t>(i)] =
        (at(i - 2) + at(i + 2)) / 16.0 + (at(i - 1) + at(i + 1)) * 4.0 / 16.0 + at(i) * 6.0 / 16.0;
  }
  const double max_val = *std::max_element(hist.begin(), hist.end());
  std::vector<double> out;
  if (!(max_val > 0.0)) return out;
  const double threshold = max_val * kOrientationPeakRatio;
  for (int j = 0; j < kOrientationBins; ++j) {
    const int l = j > 0 ? j - 1 : kOrientationBins - 1;
    const int r = j < kOrientationBins - 1 ? j + 1 : 0;
    const double hl = hist[static_cast<std::size_t>(l)], hc = hist[static_cast<std::size_t>(j)],
                 hr = hist[static_cast<std::size_t>(r)];
    if (hc > hl && hc > hr && hc >= threshold) {
      double bin = j + 0.5 * (hl - hr) / (hl - 2.0 * hc + hr);
      if (bin < 0) bin += kOrientationBins;
      if (bin >= kOrientationBins) bin -= kOrientationBins;
      out.push_back(wrap_angle(bin * kTwoPi / kOrientationBins));
    }
  }
  return out;
}

std::vector<Keypoint> assign_orientation(const Keypoint& kp, const ScaleSpace& space,
                                         const DetectorConfig& cfg) {
  if (cfg.upright) {
    Keypoint out = kp;
    out.orientation = 0.0;
    return {out};
  }
  const auto& oct = space.octaves.at(static_cast<std::size_t>(kp.octave));
  const double octave_scale = std::ldexp(1.0, kp.octave);
  const auto angles = dominant_orientations(oct.gaussians.at(static_cast<std::size_t>(kp.layer)),
                                            kp.x / octave_scale, kp.y / octave_scale,
                                            kp.sigma / octave_scale);
  std::vector<Keypoint> out;
  out.reserve(angles.size());
  for (double a : angles) {
    Keypoint copy = kp;
    copy.orientation = a;
    out.push_back(copy);
  }
  return out;
}

std::optional<HandcraftedDescriptor> gradient_histogram_descriptor(const Plane& level, double x,
                                                                   double y, double scale,
                                                                   double angle) {
  constexpr int d = kDescWidth, n = kDescBins;
  const double hist_width = kDescCellFactor * scale;
  const double diag = std::sqrt(static_cast<double>(level.rows() * level.rows() + level.cols() * level.cols()));
  const Index radius = static_cast<Index>(
      std::min(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5), std::lround(diag)));
  const double cos_t = std::cos(angle) / hist_width;
  const double sin_t = std::sin(angle) / hist_width;
  const double exp_scale = -1.0 / (d * d * 0.5);
  const double bins_per_rad = n / kTwoPi;
  const Index px = static_cast<Index>(std::lround(x));
  const Index py = static_cast<Index>(std::lround(y));

  // (d + 2) x (d + 2) x (n + 2) accumulator with one guard cell on each side.
  std::vector<double> hist(static_cast<std::size_t>((d + 2) * (d + 2) * (n + 2)), 0.0);
  auto cell = [&](int rb, int cb, int ob) -> double& {
    return hist[static_cast<std::size_t>(((rb + 1) * (d + 2) + (cb + 1)) * (n + 2) + ob)];
  };
  bool any = false;
  for (Index i = -radius; i <= radius; ++i) {
    for (Index j = -radius; j <= radius; ++j) {
      const double c_rot = static_cast<double>(j) * cos_t + static_cast<double>(i) * sin_t;
      const double r_rot = -static_cast<double>(j) * sin_t + static_cast<double>(i) * cos_t;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      const Index yy = py + i, xx = px + j;
      if (!(rbin > -1 && rbin < d && cbin > -1 && cbin < d)) continue;
      if (yy <= 0 || yy >= level.rows() - 1 || xx <= 0 || xx >= level.cols() - 1) continue;
      const double dx = level(yy, xx + 1) - level(yy, xx - 1);
      const double dy = level(yy + 1, xx) - level(yy - 1, xx);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag == 0.0) continue;
      any = true;
      const double weight = std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      const double obin = wrap_angle(std::atan2(dy, dx) - angle) * bins_per_rad;
      const double v = mag * weight;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
      o0 = (o0 % n + n) % n;
      const double v_r1 = v * fr, v_r0 = v - v_r1;
      const double v_rc11 = v_r1 * fc, v_rc10 = v_r1 - v_rc11;
      const double v_rc01 = v_r0 * fc, v_rc00 = v_r0 - v_rc01;
      const double v_rco111 = v_rc11 * fo, v_rco110 = v_rc11 - v_rco111;
      const double v_rco101 = v_rc10 * fo, v_rco100 = v_rc10 - v_rco101;
      const double v_rco011 = v_rc01 * fo, v_rco010 = v_rc01 - v_rco011;
      const double v_rco001 = v_rc00 * fo, v_rco000 = v_rc00 - v_rco001;
      cell(r0, c0, o0) += v_rco000;
      cell(r0, c0, o0 + 1) += v_rco001;
      cell(r0, c0 + 1, o0) += v_rco010;
      cell(r0, c0 + 1, o0 + 1) += v_rco011;
      cell(r0 + 1, c0, o0) += v_rco100;
      cell(r0 + 1, c0, o0 + 1) += v_rco101;
      cell(r0 + 1, c0 + 1, o0) += v_rco110;
      cell(r0 + 1, c0 + 1, o0 + 1) += v_rco111;
    }
  }
  if (!any) return std::nullopt;

  Eigen::Matrix<double, kHandcraftedDim, 1> raw;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      cell(r, c, 0) += cell(r, c, n);  // wrap orientation guard bin
      for (int o = 0; o < n; ++o) raw[(r * d + c) * n + o] = cell(r, c, o);
    }
  }
  const double norm = raw.norm();
  if (!(norm > 1e-12)) return std::nullopt;
  raw /= norm;
  raw = raw.cwiseMin(static_cast<double>(kDescClamp));
  const double renorm = raw.norm();
  if (!(renorm > 1e-12)) return std::nullopt;
  raw /= renorm;
  return HandcraftedDescriptor(raw.cast<float>());
}

std::optional<HandcraftedDescriptor> compute_descriptor(const Keypoint& kp, const ScaleSpace& space) {
  const auto& oct = space.octaves.at(static_cast<std::size_t>(kp.octave));
  const double octave_scale = std::ldexp(1.0, kp.octave);
  return gradient_histogram_descriptor(oct.gaussians.at(static_cast<std::size_t>(kp.layer)),
                                       kp.x / octave_scale, kp.y / octave_scale,
                                       kp.sigma / octave_scale, kp.orientation);
}

HandcraftedDescriptor rootsift(const HandcraftedDescriptor& desc) {
  if ((desc.array() < 0.0f).any()) throw ConfigError("rootsift: negative descriptor entry");
  const double l1 = desc.cast<double>().lpNorm<1>();
  if (!(l1 > 0.0)) throw ConfigError("rootsift: zero descriptor");
  return (desc.cast<double>() / l1).cwiseSqrt().cast<float>();
}

namespace {

std::optional<HandcraftedDescriptor> finalize(std::optional<HandcraftedDescriptor> d,
                                              const DetectorConfig& cfg) {
  if (!d) return d;
  if (cfg.rootsift) return rootsift(*d);
  return d;
}

bool inside_margin(const Keypoint& kp, const ScaleSpace& space, double margin) {
  return kp.x >= margin && kp.y >= margin &&
         kp.x <= static_cast<double>(space.width - 1) - margin &&
         kp.y <= static_cast<double>(space.height - 1) - margin;
}

}  // namespace

HandcraftedFeatures extract_handcrafted(const ImageGray& img, const DetectorConfig& cfg) {
  const ScaleSpace space = build_scale_space(img, cfg);
  const std::vector<Keypoint> detected = detect_keypoints(space, cfg);
  std::vector<Keypoint> keypoints;
  std::vector<HandcraftedDescriptor> descriptors;
  const auto budget = static_cast<std::size_t>(cfg.max_keypoints);
  for (const Keypoint& kp : detected) {
    if (keypoints.size() >= budget) break;
    if (!inside_margin(kp, space, cfg.border_margin)) continue;
    for (const Keypoint& oriented : assign_orientation(kp, space, cfg)) {
      if (keypoints.size() >= budget) break;
      auto desc = finalize(compute_descriptor(oriented, space), cfg);
      if (!desc) continue;
      keypoints.push_back(oriented);
      descriptors.push_back(*desc);
    }
  }
  HandcraftedFeatures out;
  out.keypoints = std::move(keypoints);
  out.descriptors.resize(static_cast<Index>(descriptors.size()), kHandcraftedDim);
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    out.descriptors.row(static_cast<Index>(i)) = descriptors[i].transpose();
  }
  return out;
}

std::optional<HandcraftedDescriptor> describe_at(const ScaleSpace& space, const Point2& p,
                                                 double sigma, double orientation,
                                                 const DetectorConfig& cfg) {
  if (!(sigma > 0.0)) return std::nullopt;
  const int s = space.scales_per_octave;
  const double level = std::log2(sigma / space.base_sigma);
  // Detection refines layers 1..s with |offset| < 0.5, so (level - octave) * s
  // falls in (0.5, s + 0.5); the same rule picks the detector's own level.
  const int octave = std::clamp(static_cast<int>(std::floor(level - 0.5 / s)), 0,
                                static_cast<int>(space.octaves.size()) - 1);
  const int layer = std::clamp(static_cast<int>(std::lround((level - octave) * s)), 0, s + 2);
  const double octave_scale = std::ldexp(1.0, octave);
  const auto& oct = space.octaves[static_cast<std::size_t>(octave)];
  return finalize(gradient_histogram_descriptor(oct.gaussians[static_cast<std::size_t>(layer)],
                                                p.x() / octave_scale, p.y() / octave_scale,
                                                sigma / octave_scale, wrap_angle(orientation)),
                  cfg);
}

}  // namespace resfeat
