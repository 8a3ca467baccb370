#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "simsync/types.hpp"

namespace simsync {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  bool operator==(const CameraIntrinsics&) const = default;
};

struct Frame {
  std::string id;
  std::vector<Vec3> points;
  std::optional<CameraIntrinsics> intrinsics;

  bool operator==(const Frame& o) const {
    return id == o.id && intrinsics == o.intrinsics && points == o.points;
  }
};

struct Correspondence {
  int ki = 0;
  int kj = 0;
  double w = 1.0;

  bool operator==(const Correspondence&) const = default;
};

// Stored with i < j.
struct Edge {
  int i = 0;
  int j = 0;
  std::vector<Correspondence> matches;

  double total_weight() const {
    double s = 0.0;
    for (const auto& c : matches) s += c.w;
    return s;
  }

  bool operator==(const Edge&) const = default;
};

struct ViewGraph {
  std::vector<Frame> frames;
  std::vector<Edge> edges;

  int num_frames() const { return static_cast<int>(frames.size()); }

  bool operator==(const ViewGraph&) const = default;
};

// Back-projects a pixel with known depth: depth * K^{-1} [u, v, 1]'.
inline Vec3 lift_keypoint(const Eigen::Vector2d& pixel, const CameraIntrinsics& k, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw InputError("keypoint depth must be positive");
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw InputError("focal lengths must be positive");
  const double x = (pixel.x() - k.cx) / k.fx;
  const double y = (pixel.y() - k.cy) / k.fy;
  return Vec3(depth * x, depth * y, depth);
}

// Pairs (i, i+d) for 1 <= d <= stride. With stride 2 this is the
// "neighbouring three frames" graph used for sequential imagery.
inline std::vector<std::pair<int, int>> build_chain_graph(int n_frames, int stride) {
  if (n_frames < 2) throw InputError("chain graph needs at least 2 frames");
  if (stride < 1) throw InputError("chain stride must be >= 1");
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n_frames; ++i)
    for (int d = 1; d <= stride && i + d < n_frames; ++d) out.emplace_back(i, i + d);
  return out;
}

struct ValidationReport {
  bool connected = true;
  bool effectively_connected = true;  // ignoring zero-total-weight edges
  int components = 0;
  int effective_components = 0;
  std::vector<std::pair<int, int>> duplicate_edges;
  std::vector<std::pair<int, int>> zero_weight_edges;
  std::vector<std::pair<int, int>> empty_edges;
  std::vector<std::pair<int, int>> self_loops;
  std::vector<std::string> out_of_range;
  std::vector<std::string> bad_weights;

  bool ok() const {
    return connected && effectively_connected && duplicate_edges.empty() && empty_edges.empty() &&
           self_loops.empty() && out_of_range.empty() && bad_weights.empty();
  }

  std::string summary() const {
    if (ok()) return "OK";
    std::ostringstream os;
    auto sep = [&os, first = true]() mutable {
      if (!first) os << "; ";
      first = false;
    };
    if (!connected) {
      sep();
      os << "disconnected (" << components << " components)";
    } else if (!effectively_connected) {
      sep();
      os << "effectively disconnected (" << effective_components << " components over positive-weight edges)";
    }
    if (!duplicate_edges.empty()) {
      sep();
      os << duplicate_edges.size() << " duplicate edge(s)";
    }
    if (!zero_weight_edges.empty()) {
      sep();
      os << zero_weight_edges.size() << " zero-weight edge(s)";
    }
    if (!empty_edges.empty()) {
      sep();
      os << empty_edges.size() << " edge(s) without correspondences";
    }
    if (!self_loops.empty()) {
      sep();
      os << self_loops.size() << " self loop(s)";
    }
    for (const auto& s : out_of_range) {
      sep();
      os << s;
    }
    for (const auto& s : bad_weights) {
      sep();
      os << s;
    }
    return os.str();
  }
};

namespace detail {

inline int count_components(int n, const std::vector<std::pair<int, int>>& links) {
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  int comps = n;
  for (auto [a, b] : links) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
      --comps;
    }
  }
  return comps;
}

}  // namespace detail

inline ValidationReport validate(const ViewGraph& g) {
  ValidationReport rep;
  const int n = g.num_frames();
  std::set<std::pair<int, int>> seen;
  std::vector<std::pair<int, int>> links, weighted_links;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    if (edge.i < 0 || edge.j < 0 || edge.i >= n || edge.j >= n) {
      rep.out_of_range.push_back("edge " + std::to_string(e) + " references a missing frame");
      continue;
    }
    if (edge.i == edge.j) {
      rep.self_loops.emplace_back(edge.i, edge.j);
      continue;
    }
    const auto key = std::minmax(edge.i, edge.j);
    if (!seen.insert(key).second) rep.duplicate_edges.push_back(key);
    if (edge.matches.empty()) rep.empty_edges.push_back(key);
    bool in_range = true;
    for (const auto& c : edge.matches) {
      const auto ni = static_cast<int>(g.frames[static_cast<std::size_t>(edge.i)].points.size());
      const auto nj = static_cast<int>(g.frames[static_cast<std::size_t>(edge.j)].points.size());
      if (c.ki < 0 || c.kj < 0 || c.ki >= ni || c.kj >= nj) in_range = false;
      if (!(c.w >= 0.0) || !std::isfinite(c.w))
        rep.bad_weights.push_back("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                                  ") has a negative or non-finite weight");
    }
    if (!in_range)
      rep.out_of_range.push_back("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                                 ") has a point index out of range");
    links.push_back(key);
    if (edge.total_weight() > 0.0) {
      weighted_links.push_back(key);
    } else if (!edge.matches.empty()) {
      rep.zero_weight_edges.push_back(key);
    }
  }
  rep.components = n == 0 ? 0 : detail::count_components(n, links);
  rep.effective_components = n == 0 ? 0 : detail::count_components(n, weighted_links);
  rep.connected = rep.components <= 1;
  rep.effectively_connected = rep.effective_components <= 1;
  return rep;
}

// Throws InputError with the report summary when the graph is unusable by the solvers.
inline void require_valid(const ViewGraph& g) {
  if (g.num_frames() == 0) throw InputError("graph has no frames");
  const auto rep = validate(g);
  if (!rep.ok()) throw InputError("invalid view graph: " + rep.summary());
}

// Reorients every edge to i < j, swapping the correspondence sides.
inline void canonicalize_edges(ViewGraph& g) {
  for (auto& e : g.edges) {
    if (e.i > e.j) {
      std::swap(e.i, e.j);
      for (auto& c : e.matches) std::swap(c.ki, c.kj);
    }
  }
}

// The (i-side, j-side) matched points of an edge as 3 x n matrices plus weights.
struct EdgeClouds {
  Mat3X pi;
  Mat3X pj;
  Vec w;
};

inline EdgeClouds edge_clouds(const ViewGraph& g, const Edge& e) {
  EdgeClouds out;
  const auto n = static_cast<Eigen::Index>(e.matches.size());
  out.pi.resize(3, n);
  out.pj.resize(3, n);
  out.w.resize(n);
  const auto& fi = g.frames[static_cast<std::size_t>(e.i)];
  const auto& fj = g.frames[static_cast<std::size_t>(e.j)];
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& c = e.matches[static_cast<std::size_t>(k)];
    out.pi.col(k) = fi.points[static_cast<std::size_t>(c.ki)];
    out.pj.col(k) = fj.points[static_cast<std::size_t>(c.kj)];
    out.w(k) = c.w;
  }
  return out;
}

}  // namespace simsync
