#include "resfeat/homography.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "resfeat/binary_io.hpp"
#include "resfeat/error.hpp"

namespace resfeat {

namespace {
constexpr double kDetTolerance = 1e-12;
constexpr double kInfinityTolerance = 1e-12;
}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  if (!m_.allFinite()) throw GeometryError("homography has non-finite entries");
  if (std::abs(m_(2, 2)) > 1e-15) m_ /= m_(2, 2);
  if (!(std::abs(m_.determinant()) > kDetTolerance)) {
    throw GeometryError("homography is not invertible");
  }
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::scaling(double sx, double sy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Point2 Homography::apply(const Point2& p) const {
  const Eigen::Vector3d q = m_ * p.homogeneous();
  if (!(std::abs(q.z()) > kInfinityTolerance)) {
    throw GeometryError("point maps to infinity under homography");
  }
  return q.hnormalized();
}

LocalAffine local_affine(const Homography& h, const Point2& p, double angle) {
  const Eigen::Matrix3d& m = h.matrix();
  const Eigen::Vector3d q = m * p.homogeneous();
  if (!(std::abs(q.z()) > kInfinityTolerance)) throw GeometryError("point maps to infinity");
  const double w = q.z();
  // d(q.xy / w) / dp
  Eigen::Matrix2d jac;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) jac(r, c) = (m(r, c) * w - q(r) * m(2, c)) / (w * w);
  }
  const Eigen::Vector2d dir = jac * Eigen::Vector2d(std::cos(angle), std::sin(angle));
  LocalAffine out;
  out.scale = std::sqrt(std::abs(jac.determinant()));
  out.angle = std::atan2(dir.y(), dir.x());
  return out;
}

Homography parse_homography(const std::string& text) {
  std::istringstream in(text);
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> m(r, c))) throw FormatError("homography text must hold 9 numbers");
    }
  }
  std::string extra;
  if (in >> extra) throw FormatError("homography text has trailing content '" + extra + "'");
  return Homography(m);
}

std::string format_homography(const Homography& h) {
  std::string out;
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", h(r, c));
      out += buf;
      out += c < 2 ? ' ' : '\n';
    }
  }
  return out;
}

Homography read_homography(const std::filesystem::path& path) {
  return parse_homography(binary::read_file(path.string()));
}

void write_homography(const std::filesystem::path& path, const Homography& h) {
  binary::write_file(path.string(), format_homography(h));
}

}  // namespace resfeat
