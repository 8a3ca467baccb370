#pragma once

#include <cmath>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "simsync/types.hpp"

namespace simsync {

// Result of aligning a source cloud X onto a target cloud Y: Y ~ s R X + t.
// On an edge (i, j) the source is frame j and the target frame i.
struct EdgeRegistration {
  SimilarityTransform transform;
  Mat3X residuals;  // Y - (s R X + t), one column per correspondence
  bool nonpositive_scale = false;
};

namespace detail {

inline void check_clouds(const Mat3X& x, const Mat3X& y, const Vec& w) {
  if (x.cols() != y.cols() || x.cols() != w.size()) throw InputError("registration inputs have mismatched sizes");
  if (x.cols() < 3) throw InputError("registration needs at least 3 correspondences");
  if ((w.array() < 0.0).any() || !w.allFinite()) throw InputError("registration weights must be finite and >= 0");
  if (!(w.sum() > 0.0)) throw InputError("registration needs positive total weight");
}

inline EdgeRegistration register_clouds(const Mat3X& x, const Mat3X& y, const Vec& w, bool with_scale) {
  check_clouds(x, y, w);
  const double wsum = w.sum();
  const Vec3 mx = (x * w) / wsum;
  const Vec3 my = (y * w) / wsum;
  const Vec sw = w.cwiseSqrt();
  const Mat3X a = (y.colwise() - my) * sw.asDiagonal();
  const Mat3X b = (x.colwise() - mx) * sw.asDiagonal();
  const Mat3 abt = a * b.transpose();
  Eigen::JacobiSVD<Mat3> svd(abt, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (!(d(1) > 1e-12 * std::max(1.0, d(0))))
    throw NumericalError("degenerate configuration: cross-covariance has rank <= 1");
  Mat3 sgn = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sgn(2, 2) = -1.0;

  EdgeRegistration out;
  auto& T = out.transform;
  T.R = svd.matrixU() * sgn * svd.matrixV().transpose();
  if (with_scale) {
    const double bn = b.squaredNorm();
    if (!(bn > 0.0)) throw NumericalError("degenerate configuration: source cloud has no spread");
    T.s = (d.asDiagonal() * sgn).trace() / bn;
    out.nonpositive_scale = !(T.s > 0.0);
  }
  T.t = my - T.s * (T.R * mx);
  out.residuals = y - ((T.s * T.R * x).colwise() + T.t);
  return out;
}

}  // namespace detail

// Weighted scaled registration in closed form.
inline EdgeRegistration weighted_umeyama(const Mat3X& x, const Mat3X& y, const Vec& w) {
  return detail::register_clouds(x, y, w, true);
}

// Same with s fixed to 1 (Arun's method).
inline EdgeRegistration weighted_arun(const Mat3X& x, const Mat3X& y, const Vec& w) {
  return detail::register_clouds(x, y, w, false);
}

// Weighted sum of squared residuals of a candidate transform.
inline double registration_cost(const SimilarityTransform& T, const Mat3X& x, const Mat3X& y, const Vec& w) {
  const Mat3X r = y - ((T.s * T.R * x).colwise() + T.t);
  return (r.colwise().squaredNorm().transpose().array() * w.array()).sum();
}

// Covariance of the (rotation, translation) estimate of Arun's method, with
// the rotation perturbed on the right: R = R* exp(hat(omega)), t = t* + delta.
// Each residual y_k - R x_k - t carries N(0, 2 sigma^2 I) noise, i.e. both
// clouds have isotropic noise sigma. Optional weights scale the information.
inline Eigen::Matrix<double, 6, 6> arun_covariance(const Mat3X& x, const Mat3& r_star, double sigma,
                                                   const Vec& weights = Vec()) {
  if (!(sigma > 0.0)) throw InputError("sigma must be positive");
  if (x.cols() < 3) throw InputError("covariance needs at least 3 points");
  if (weights.size() != 0 && weights.size() != x.cols()) throw InputError("weight count mismatch");
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Zero();
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    Eigen::Matrix<double, 3, 6> h;
    h.leftCols<3>() = -r_star * hat(x.col(k));
    h.rightCols<3>().setIdentity();
    const double wk = weights.size() ? weights(k) : 1.0;
    info.noalias() += wk * h.transpose() * h;
  }
  Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(info);
  const double scale = info.diagonal().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * scale))
    throw NumericalError("information matrix is singular (collinear points)");
  Eigen::Matrix<double, 6, 6> cov = 2.0 * sigma * sigma * ldlt.solve(Eigen::Matrix<double, 6, 6>::Identity());
  return 0.5 * (cov + cov.transpose());
}

inline constexpr double kDefaultConfidence = 0.9999;
inline constexpr double kChi2Df3At9999 = 21.11;

// chi^2 quantile with 3 degrees of freedom; the default confidence uses the
// tabulated 21.11 so results match published thresholds exactly.
inline double chi2_quantile_3dof(double confidence = kDefaultConfidence) {
  if (!(confidence > 0.0) || !(confidence < 1.0)) throw InputError("confidence must lie in (0, 1)");
  if (confidence == kDefaultConfidence) return kChi2Df3At9999;
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(3.0), confidence);
}

// Inlier threshold on a point-to-point residual when both points carry
// N(0, sigma^2 I) noise.
inline double noise_bound_global(double sigma, double confidence = kDefaultConfidence) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be positive");
  return std::sqrt(chi2_quantile_3dof(confidence)) * std::sqrt(2.0) * sigma;
}

// Same for residuals expressed in a frame whose cloud was divided by s_i.
inline double noise_bound_edge(double sigma, double s_i, double confidence = kDefaultConfidence) {
  if (!(s_i > 0.0) || !std::isfinite(s_i)) throw InputError("scale must be positive");
  return noise_bound_global(sigma, confidence) / s_i;
}

}  // namespace simsync
