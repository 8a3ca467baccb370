#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "simsync/rng.hpp"
#include "simsync/types.hpp"
#include "simsync/view_graph.hpp"

namespace simsync {

enum class Dataset { circle, grid, line };

inline const char* to_string(Dataset d) {
  switch (d) {
    case Dataset::circle: return "circle";
    case Dataset::grid: return "grid";
    case Dataset::line: return "line";
  }
  return "unknown";
}

inline Dataset parse_dataset(const std::string& s) {
  if (s == "circle") return Dataset::circle;
  if (s == "grid") return Dataset::grid;
  if (s == "line") return Dataset::line;
  throw InputError("unknown dataset '" + s + "' (expected circle, grid or line)");
}

struct SimConfig {
  Dataset dataset = Dataset::circle;
  int n_poses = 10;
  int n_points = 1000;
  double sigma = 0.01;
  double fov_deg = 60.0;
  double outlier_rate = 0.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  // Candidate edges join frames at most this many steps apart; 0 allows all
  // pairs and a negative value picks the dataset default (grid: 10, else 0).
  int max_frame_gap = -1;
  std::uint64_t seed = 0;

  int frame_gap() const {
    if (max_frame_gap >= 0) return max_frame_gap;
    return dataset == Dataset::grid ? kGridFrameGap : 0;
  }

  static constexpr int kGridFrameGap = 10;

  void validate() const {
    if (n_poses < 2) throw InputError("n_poses must be >= 2");
    if (n_points < 10) throw InputError("n_points must be >= 10");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be >= 0");
    if (!(fov_deg > 0.0) || !(fov_deg <= 360.0)) throw InputError("fov_deg must lie in (0, 360]");
    if (!(outlier_rate >= 0.0) || !(outlier_rate < 1.0)) throw InputError("outlier_rate must lie in [0, 1)");
    if (!(scale_min > 0.0) || !(scale_max >= scale_min) || !std::isfinite(scale_max))
      throw InputError("scale range must satisfy 0 < min <= max");
  }
};

// World-to-camera pose: a world point P appears at R P + t in the camera.
struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 center() const { return -(R.transpose() * t); }
};

// Camera at `center` with its optical (+z) axis pointing at `target`.
inline CameraPose look_at(const Vec3& center, const Vec3& target) {
  const Vec3 z = (target - center).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(z.dot(up)) > 0.999) up = Vec3::UnitY();
  const Vec3 x = up.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 cam_to_world;
  cam_to_world.col(0) = x;
  cam_to_world.col(1) = y;
  cam_to_world.col(2) = z;
  CameraPose p;
  p.R = cam_to_world.transpose();
  p.t = -(p.R * center);
  return p;
}

// The 26 nodes of {-1, 0, 1}^3 on the surface of the edge-length-2 cube.
inline std::vector<Vec3> grid_surface_nodes() {
  std::vector<Vec3> nodes;
  for (int x = -1; x <= 1; ++x)
    for (int y = -1; y <= 1; ++y)
      for (int z = -1; z <= 1; ++z)
        if (x != 0 || y != 0 || z != 0) nodes.emplace_back(x, y, z);
  return nodes;
}

inline Mat3X sample_world_points(const SimConfig& c) {
  Rng rng(c.seed, "world-points");
  Mat3X p(3, c.n_points);
  for (int k = 0; k < c.n_points; ++k) p.col(k) = rng.normal3();
  return p;
}

// `target` is where the circle and grid cameras look (the origin), and the
// line cameras look at the supplied cloud centroid.
inline std::vector<CameraPose> gen_trajectory(const SimConfig& c, const Vec3& cloud_centroid = Vec3::Zero()) {
  c.validate();
  std::vector<CameraPose> poses;
  const int n = c.n_poses;
  switch (c.dataset) {
    case Dataset::circle:
      for (int k = 0; k < n; ++k) {
        const double th = 2.0 * M_PI * k / n;
        poses.push_back(look_at(Vec3(10.0 * std::cos(th), 10.0 * std::sin(th), 0.0), Vec3::Zero()));
      }
      break;
    case Dataset::line:
      for (int k = 0; k < n; ++k) {
        const double x = -1.5 + 3.0 * k / (n - 1);
        poses.push_back(look_at(Vec3(x, -10.0, 0.0), cloud_centroid));
      }
      break;
    case Dataset::grid: {
      Rng rng(c.seed, "trajectory");
      const auto nodes = grid_surface_nodes();
      Vec3 pos = nodes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(nodes.size()) - 1))];
      for (int k = 0; k < n; ++k) {
        poses.push_back(look_at(pos, Vec3::Zero()));
        std::vector<Vec3> next;
        for (const auto& q : nodes)
          if (std::abs((q - pos).norm() - 1.0) < 1e-12) next.push_back(q);
        pos = next[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(next.size()) - 1))];
      }
      break;
    }
  }
  return poses;
}

// Camera-frame clouds R_i P + t_i + eps_i with eps ~ N(0, sigma^2 I).
inline std::vector<Mat3X> observe(const std::vector<CameraPose>& poses, const Mat3X& world, double sigma,
                                  std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InputError("sigma must be >= 0");
  std::vector<Mat3X> out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Mat3X cloud = (poses[i].R * world).colwise() + poses[i].t;
    if (sigma > 0.0) {
      Rng rng(seed, "noise", i);
      for (Eigen::Index k = 0; k < cloud.cols(); ++k) cloud.col(k) += rng.normal3(sigma);
    }
    out.push_back(std::move(cloud));
  }
  return out;
}

inline bool in_fov(const Vec3& p, double fov_deg) {
  const double cos_half = std::cos(deg2rad(fov_deg / 2.0));
  const double nrm = p.norm();
  if (nrm == 0.0) return false;
  return p.z() / nrm >= cos_half;
}

// Point indices visible in both clouds.
inline std::vector<int> covisible(const Mat3X& ci, const Mat3X& cj, double fov_deg) {
  std::vector<int> idx;
  for (Eigen::Index k = 0; k < ci.cols(); ++k)
    if (in_fov(ci.col(k), fov_deg) && in_fov(cj.col(k), fov_deg)) idx.push_back(static_cast<int>(k));
  return idx;
}

inline constexpr int kMinCovisible = 10;

// Edges over pairs i < j (with j - i <= max_gap unless max_gap is 0) that
// share at least 10 covisible points; each keeps a random subset of size
// q ~ U{10, ..., |I_ij|} with unit weights.
inline std::vector<Edge> fov_correspondences(const std::vector<Mat3X>& clouds, double fov_deg, std::uint64_t seed,
                                             int max_gap = 0) {
  std::vector<Edge> edges;
  const int n = static_cast<int>(clouds.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (max_gap > 0 && j - i > max_gap) break;
      std::vector<int> idx = covisible(clouds[static_cast<std::size_t>(i)], clouds[static_cast<std::size_t>(j)], fov_deg);
      if (static_cast<int>(idx.size()) < kMinCovisible) continue;
      Rng rng(seed, "subset", static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const int q = rng.uniform_int(kMinCovisible, static_cast<int>(idx.size()));
      // Partial Fisher-Yates for the first q slots.
      for (int a = 0; a < q; ++a) {
        const int b = rng.uniform_int(a, static_cast<int>(idx.size()) - 1);
        std::swap(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
      }
      idx.resize(static_cast<std::size_t>(q));
      std::sort(idx.begin(), idx.end());
      Edge e;
      e.i = i;
      e.j = j;
      for (int k : idx) e.matches.push_back({k, k, 1.0});
      edges.push_back(std::move(e));
    }
  }
  return edges;
}

// s_1 = 1, others uniform in [lo, hi]. Clouds are divided by their scale.
inline std::vector<double> apply_unknown_scales(std::vector<Mat3X>& clouds, double lo, double hi, std::uint64_t seed) {
  if (!(lo > 0.0) || !(hi >= lo)) throw InputError("scale range must satisfy 0 < min <= max");
  Rng rng(seed, "scales");
  std::vector<double> s(clouds.size(), 1.0);
  for (std::size_t i = 1; i < clouds.size(); ++i) {
    s[i] = rng.uniform(lo, hi);
    clouds[i] /= s[i];
  }
  return s;
}

// Replaces the j-side of floor(rate * n_ij) matches per edge with a fresh
// N(0, I) point appended to frame j. When `frame_to_world` is given the draw
// is a world point seen from frame j, otherwise it is taken in frame j's own
// coordinates. Returns per-edge inlier masks.
inline std::vector<std::vector<bool>> inject_outliers(ViewGraph& g, double rate, std::uint64_t seed,
                                                      const std::vector<SimilarityTransform>& frame_to_world = {}) {
  if (!frame_to_world.empty() && static_cast<int>(frame_to_world.size()) != g.num_frames())
    throw InputError("need one frame transform per frame");
  if (!(rate >= 0.0) || !(rate < 1.0)) throw InputError("outlier rate must lie in [0, 1)");
  std::vector<std::vector<bool>> masks;
  for (auto& e : g.edges) {
    const int nij = static_cast<int>(e.matches.size());
    std::vector<bool> mask(static_cast<std::size_t>(nij), true);
    const int n_out = static_cast<int>(std::floor(rate * nij));
    if (n_out > 0) {
      Rng rng(seed, "outliers", static_cast<std::uint64_t>(e.i), static_cast<std::uint64_t>(e.j));
      std::vector<int> order(static_cast<std::size_t>(nij));
      std::iota(order.begin(), order.end(), 0);
      for (int a = 0; a < n_out; ++a) {
        const int b = rng.uniform_int(a, nij - 1);
        std::swap(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
      }
      std::sort(order.begin(), order.begin() + n_out);
      auto& pts = g.frames[static_cast<std::size_t>(e.j)].points;
      for (int a = 0; a < n_out; ++a) {
        const int k = order[static_cast<std::size_t>(a)];
        const Vec3 p = rng.normal3();
        pts.push_back(frame_to_world.empty() ? p : frame_to_world[static_cast<std::size_t>(e.j)].inverse().apply(p));
        e.matches[static_cast<std::size_t>(k)].kj = static_cast<int>(pts.size()) - 1;
        mask[static_cast<std::size_t>(k)] = false;
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

struct GroundTruth {
  // Frame-to-reference transforms with frame 0 at (1, I, 0).
  std::vector<SimilarityTransform> transforms;
  std::vector<double> scales;
  Mat3X world_points;
  std::vector<std::vector<bool>> inlier_masks;  // aligned with graph.edges
};

struct SimInstance {
  SimConfig config;
  ViewGraph graph;
  GroundTruth truth;
};

// Frame-to-world similarity of a camera whose cloud was divided by s.
inline SimilarityTransform frame_to_world(const CameraPose& p, double s) {
  SimilarityTransform x;
  x.s = s;
  x.R = p.R.transpose();
  x.t = -(p.R.transpose() * p.t);
  return x;
}

// Expresses every transform relative to the first one.
inline std::vector<SimilarityTransform> anchor_to_first(const std::vector<SimilarityTransform>& xs) {
  if (xs.empty()) return {};
  const SimilarityTransform inv = xs.front().inverse();
  std::vector<SimilarityTransform> out;
  for (const auto& x : xs) out.push_back(inv * x);
  out.front() = SimilarityTransform::identity();
  return out;
}

inline SimInstance simulate(const SimConfig& c) {
  c.validate();
  SimInstance inst;
  inst.config = c;
  inst.truth.world_points = sample_world_points(c);
  const Vec3 centroid = inst.truth.world_points.rowwise().mean();
  const auto poses = gen_trajectory(c, centroid);
  auto clouds = observe(poses, inst.truth.world_points, c.sigma, c.seed);
  // Covisibility is decided before scaling; the FOV test is scale invariant anyway.
  auto edges = fov_correspondences(clouds, c.fov_deg, c.seed, c.frame_gap());
  inst.truth.scales = apply_unknown_scales(clouds, c.scale_min, c.scale_max, c.seed);

  for (int i = 0; i < c.n_poses; ++i) {
    Frame f;
    f.id = std::to_string(i);
    const auto& cl = clouds[static_cast<std::size_t>(i)];
    f.points.reserve(static_cast<std::size_t>(cl.cols()));
    for (Eigen::Index k = 0; k < cl.cols(); ++k) f.points.emplace_back(cl.col(k));
    inst.graph.frames.push_back(std::move(f));
  }
  inst.graph.edges = std::move(edges);
  const auto rep = validate(inst.graph);
  if (!rep.connected)
    throw InputError("simulated view graph is disconnected (" + std::to_string(rep.components) +
                     " components); increase fov_deg or n_points");
  std::vector<SimilarityTransform> xs;
  for (int i = 0; i < c.n_poses; ++i)
    xs.push_back(frame_to_world(poses[static_cast<std::size_t>(i)], inst.truth.scales[static_cast<std::size_t>(i)]));
  inst.truth.inlier_masks = inject_outliers(inst.graph, c.outlier_rate, c.seed, xs);
  inst.truth.transforms = anchor_to_first(xs);
  return inst;
}

}  // namespace simsync
