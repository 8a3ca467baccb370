#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace simsync {

inline constexpr const char* kVersion = "0.1.0";

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

// Thrown for malformed user input (files, flags, preconditions on data).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a numerical routine cannot produce a meaningful answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An element of SIM(3): maps a point p to s * R * p + t.
struct SimilarityTransform {
  double s = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static SimilarityTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return s * (R * p) + t; }

  SimilarityTransform inverse() const {
    SimilarityTransform inv;
    inv.s = 1.0 / s;
    inv.R = R.transpose();
    inv.t = -(inv.R * t) / s;
    return inv;
  }

  // (this * other)(p) == this->apply(other.apply(p))
  SimilarityTransform operator*(const SimilarityTransform& other) const {
    SimilarityTransform out;
    out.s = s * other.s;
    out.R = R * other.R;
    out.t = s * (R * other.t) + t;
    return out;
  }

  // Checks the SIM(3) membership invariants to the given tolerance.
  bool is_valid(double tol = 1e-9) const {
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    if (std::abs(R.determinant() - 1.0) > tol) return false;
    if ((R.transpose() * R - Mat3::Identity()).norm() > tol) return false;
    return t.allFinite();
  }
};

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return m;
}

// Nearest rotation in Frobenius norm (orthogonal Procrustes with det fix).
inline Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

// Geodesic angle of a rotation, in radians. atan2 of (sin, cos) keeps full
// precision near 0 where acos((tr - 1) / 2) loses half the digits.
inline double rotation_angle(const Mat3& r) {
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::atan2(0.5 * v.norm(), c);
}

inline double rad2deg(double r) { return r * 180.0 / M_PI; }
inline double deg2rad(double d) { return d * M_PI / 180.0; }

// Rotation exponential map (Rodrigues).
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + hat(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

inline Vec3 so3_log(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

}  // namespace simsync
