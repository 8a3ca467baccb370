#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "simsync/registration.hpp"
#include "simsync/types.hpp"

namespace simsync {

enum class GaugeMode { anchor, median_scale, umeyama };

inline const char* to_string(GaugeMode m) {
  switch (m) {
    case GaugeMode::anchor: return "anchor";
    case GaugeMode::median_scale: return "median_scale";
    case GaugeMode::umeyama: return "umeyama";
  }
  return "unknown";
}

inline GaugeMode parse_gauge_mode(const std::string& s) {
  if (s == "anchor") return GaugeMode::anchor;
  if (s == "median_scale" || s == "median-scale") return GaugeMode::median_scale;
  if (s == "umeyama") return GaugeMode::umeyama;
  throw InputError("unknown gauge mode '" + s + "'");
}

using Trajectory = std::vector<SimilarityTransform>;

struct AlignedPair {
  Trajectory est;
  Trajectory gt;
};

namespace detail {

inline Trajectory anchored(const Trajectory& xs) {
  Trajectory out;
  const SimilarityTransform inv = xs.front().inverse();
  for (const auto& x : xs) out.push_back(inv * x);
  out.front() = SimilarityTransform::identity();
  return out;
}

inline double median_translation_norm(const Trajectory& xs) {
  std::vector<double> n;
  // The anchor sits at the origin, so it is left out.
  for (std::size_t i = xs.size() > 1 ? 1 : 0; i < xs.size(); ++i) n.push_back(xs[i].t.norm());
  std::sort(n.begin(), n.end());
  const std::size_t m = n.size();
  return m % 2 ? n[m / 2] : 0.5 * (n[m / 2 - 1] + n[m / 2]);
}

}  // namespace detail

// anchor: both trajectories re-expressed with frame 0 at (1, I, 0).
// median_scale: then estimated translations are multiplied by
//   median_i |t_gt,i| / median_i |t_est,i|   (i >= 1).
// umeyama: then the estimate is moved by the similarity that best aligns
//   estimated positions onto ground-truth positions.
inline AlignedPair align_gauge(const Trajectory& est, const Trajectory& gt, GaugeMode mode = GaugeMode::anchor) {
  if (est.size() != gt.size()) throw InputError("trajectories differ in length");
  if (est.empty()) throw InputError("empty trajectory");
  AlignedPair out{detail::anchored(est), detail::anchored(gt)};
  if (mode == GaugeMode::median_scale) {
    const double me = detail::median_translation_norm(out.est);
    if (!(me > 0.0)) throw InputError("median predicted translation norm is zero");
    const double ratio = detail::median_translation_norm(out.gt) / me;
    for (auto& x : out.est) x.t *= ratio;
  } else if (mode == GaugeMode::umeyama) {
    const auto n = static_cast<Eigen::Index>(est.size());
    if (n < 3) throw InputError("umeyama alignment needs at least 3 frames");
    Mat3X pe(3, n), pg(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pe.col(i) = out.est[static_cast<std::size_t>(i)].t;
      pg.col(i) = out.gt[static_cast<std::size_t>(i)].t;
    }
    const SimilarityTransform g = weighted_umeyama(pe, pg, Vec::Ones(n)).transform;
    for (auto& x : out.est) x = g * x;
  }
  return out;
}

struct MetricsReport {
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  double scale_err = 0.0;
  double ate = 0.0;
  double rpe_t = 0.0;
  double rpe_r = 0.0;
  double eta = 0.0;
};

inline double rotation_error_deg(const Mat3& a, const Mat3& b) { return rad2deg(rotation_angle(a * b.transpose())); }

// Expects trajectories already in a common gauge. RPE uses consecutive frames
// (rigid part only): rpe_t is an RMSE, rpe_r a mean in degrees.
inline MetricsReport compute_metrics(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size()) throw InputError("trajectories differ in length");
  if (est.empty()) throw InputError("empty trajectory");
  MetricsReport m;
  const double n = static_cast<double>(est.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    m.rot_err_deg += rotation_error_deg(est[i].R, gt[i].R);
    const double dt = (est[i].t - gt[i].t).norm();
    m.trans_err += dt;
    sq += dt * dt;
    m.scale_err += std::abs(est[i].s / gt[i].s - 1.0);
  }
  m.rot_err_deg /= n;
  m.trans_err /= n;
  m.scale_err /= n;
  m.ate = std::sqrt(sq / n);
  if (est.size() > 1) {
    double rsq = 0.0, rr = 0.0;
    for (std::size_t i = 0; i + 1 < est.size(); ++i) {
      const Mat3 re = est[i].R.transpose() * est[i + 1].R;
      const Mat3 rg = gt[i].R.transpose() * gt[i + 1].R;
      const Vec3 te = est[i].R.transpose() * (est[i + 1].t - est[i].t);
      const Vec3 tg = gt[i].R.transpose() * (gt[i + 1].t - gt[i].t);
      rsq += (te - tg).squaredNorm();
      rr += rotation_error_deg(re, rg);
    }
    const double pairs = n - 1.0;
    m.rpe_t = std::sqrt(rsq / pairs);
    m.rpe_r = rr / pairs;
  }
  return m;
}

inline double mean_scale(const Trajectory& xs) {
  double s = 0.0;
  for (const auto& x : xs) s += x.s;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

struct CsvRow {
  std::uint64_t seed = 0;
  std::string dataset;
  int n_poses = 0;
  double sigma = 0.0;
  double lambda = 0.0;
  double outlier_rate = 0.0;
  std::string method;
  MetricsReport metrics;
  bool certified = false;
  double wall_ms = 0.0;
};

inline const char* csv_header() {
  return "seed,dataset,N,sigma,lambda,outlier_rate,method,rot_err_deg,trans_err,scale_err,ate,rpe_t,rpe_r,eta,"
         "certified,wall_ms";
}

inline std::string to_csv(const CsvRow& r) {
  char buf[512];
  const auto& m = r.metrics;
  std::snprintf(buf, sizeof buf, "%llu,%s,%d,%.10g,%.10g,%.10g,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.3f",
                static_cast<unsigned long long>(r.seed), r.dataset.c_str(), r.n_poses, r.sigma, r.lambda,
                r.outlier_rate, r.method.c_str(), m.rot_err_deg, m.trans_err, m.scale_err, m.ate, m.rpe_t, m.rpe_r,
                m.eta, r.certified ? 1 : 0, r.wall_ms);
  return buf;
}

// Writes the provenance comment, the header and the rows.
inline void write_csv(std::ostream& os, const std::vector<CsvRow>& rows, const std::string& provenance = "") {
  if (!provenance.empty()) os << "# " << provenance << "\n";
  os << csv_header() << "\n";
  for (const auto& r : rows) os << to_csv(r) << "\n";
}

}  // namespace simsync
