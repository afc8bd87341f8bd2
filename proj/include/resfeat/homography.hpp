#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace resfeat {

using Point2 = Eigen::Vector2d;

/// Invertible 3x3 projective map, scaled so that H(2,2) == 1 whenever that
/// entry is nonzero.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws GeometryError if |det| <= 1e-12 after normalization.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);
  static Homography scaling(double sx, double sy);

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Homography inverse() const;

  /// (a * b)(p) == a(b(p)).
  friend Homography operator*(const Homography& a, const Homography& b) {
    return Homography(a.m_ * b.m_);
  }

  /// Throws GeometryError when the mapped point is at infinity (|w| <= 1e-12).
  Point2 apply(const Point2& p) const;

 private:
  Eigen::Matrix3d m_;
};

inline Point2 apply_homography(const Homography& h, const Point2& p) { return h.apply(p); }

/// Local scale sqrt(|det J|) and the image of direction `angle` at p.
struct LocalAffine {
  double scale = 1.0;
  double angle = 0.0;
};
LocalAffine local_affine(const Homography& h, const Point2& p, double angle);

/// Three lines of three whitespace-separated decimals (HPatches H_1_k files).
Homography parse_homography(const std::string& text);
std::string format_homography(const Homography& h);
Homography read_homography(const std::filesystem::path& path);
void write_homography(const std::filesystem::path& path, const Homography& h);

}  // namespace resfeat
