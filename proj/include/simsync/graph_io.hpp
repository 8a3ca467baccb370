#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simsync/sdp.hpp"
#include "simsync/simulate.hpp"
#include "simsync/types.hpp"
#include "simsync/view_graph.hpp"

namespace simsync {

using json = nlohmann::json;

class SchemaError : public InputError {
 public:
  explicit SchemaError(const std::string& msg) : InputError("schema error: " + msg) {}
};

struct LoadOptions {
  // Fraction of the deepest keypoints dropped per lifted frame (0 keeps all).
  double depth_trim_quantile = 0.0;
};

namespace io_detail {

inline const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + " is missing '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(where + " must be finite");
  return v;
}

inline Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw SchemaError(where + " must be an array of 3 numbers");
  return {number(j[0], where), number(j[1], where), number(j[2], where)};
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json to_json(const Mat3& r) {
  json a = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) a.push_back(r(i, k));
  return a;
}

inline json to_json(const SimilarityTransform& x, const std::string& id) {
  return {{"id", id}, {"s", x.s}, {"R", to_json(x.R)}, {"t", to_json(x.t)}};
}

inline SimilarityTransform transform_from_json(const json& j, const std::string& where) {
  SimilarityTransform x;
  x.s = number(need(j, "s", where), where + ".s");
  const json& r = need(j, "R", where);
  if (!r.is_array() || r.size() != 9) throw SchemaError(where + ".R must hold 9 numbers (row-major)");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) x.R(i, k) = number(r[static_cast<std::size_t>(3 * i + k)], where + ".R");
  x.t = vec3(need(j, "t", where), where + ".t");
  return x;
}

inline json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("malformed JSON in '" + path + "': " + e.what());
  }
}

inline void write_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << j.dump(1) << "\n";
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace io_detail

// Parses the graph schema. Edges are reoriented to i < j; frames given as
// keypoints are lifted with their intrinsics.
inline ViewGraph graph_from_json(const json& doc, const LoadOptions& opt = {}) {
  using namespace io_detail;
  if (!(opt.depth_trim_quantile >= 0.0) || !(opt.depth_trim_quantile < 1.0))
    throw InputError("depth trim quantile must lie in [0, 1)");
  if (!doc.is_object()) throw SchemaError("top level must be an object");
  const json& frames = need(doc, "frames", "graph");
  const json& edges = need(doc, "edges", "graph");
  if (!frames.is_array() || !edges.is_array()) throw SchemaError("'frames' and 'edges' must be arrays");

  ViewGraph g;
  std::map<std::string, int> index;
  // Per frame, old keypoint index -> new index (-1 when trimmed); empty if unchanged.
  std::vector<std::vector<int>> remap;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const json& jf = frames[f];
    const std::string where = "frames[" + std::to_string(f) + "]";
    const json& jid = need(jf, "id", where);
    if (!jid.is_string()) throw SchemaError(where + ".id must be a string");
    Frame fr;
    fr.id = jid.get<std::string>();
    if (!index.emplace(fr.id, static_cast<int>(f)).second) throw SchemaError("duplicate frame id '" + fr.id + "'");
    if (jf.contains("intrinsics")) {
      const json& k = jf.at("intrinsics");
      const std::string kw = where + ".intrinsics";
      fr.intrinsics = CameraIntrinsics{number(need(k, "fx", kw), kw + ".fx"), number(need(k, "fy", kw), kw + ".fy"),
                                       number(need(k, "cx", kw), kw + ".cx"), number(need(k, "cy", kw), kw + ".cy")};
    }
    const bool has_points = jf.contains("points");
    const bool has_kp = jf.contains("keypoints");
    if (has_points == has_kp) throw SchemaError(where + " needs exactly one of 'points' or 'keypoints'");
    std::vector<int> map;
    if (has_points) {
      const json& pts = jf.at("points");
      if (!pts.is_array()) throw SchemaError(where + ".points must be an array");
      for (std::size_t k = 0; k < pts.size(); ++k) fr.points.push_back(vec3(pts[k], where + ".points"));
    } else {
      if (!fr.intrinsics) throw SchemaError(where + " has keypoints but no intrinsics");
      const json& kps = jf.at("keypoints");
      if (!kps.is_array()) throw SchemaError(where + ".keypoints must be an array");
      std::vector<Vec3> lifted;
      std::vector<double> depth;
      for (std::size_t k = 0; k < kps.size(); ++k) {
        const std::string kw = where + ".keypoints[" + std::to_string(k) + "]";
        const json& px = need(kps[k], "pixel", kw);
        if (!px.is_array() || px.size() != 2) throw SchemaError(kw + ".pixel must hold 2 numbers");
        const double d = number(need(kps[k], "depth", kw), kw + ".depth");
        if (!(d > 0.0)) throw SchemaError(kw + ".depth must be positive");
        lifted.push_back(lift_keypoint({number(px[0], kw), number(px[1], kw)}, *fr.intrinsics, d));
        depth.push_back(d);
      }
      if (opt.depth_trim_quantile > 0.0 && !depth.empty()) {
        std::vector<double> sorted = depth;
        std::sort(sorted.begin(), sorted.end());
        const auto drop = static_cast<std::size_t>(std::floor(opt.depth_trim_quantile * static_cast<double>(sorted.size())));
        const std::size_t keep = sorted.size() - drop;
        // Keep the `keep` shallowest points; ties at the cut are resolved by order.
        const double cut = sorted[keep - 1];
        std::size_t at_cut = static_cast<std::size_t>(std::count(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep), cut));
        map.assign(depth.size(), -1);
        for (std::size_t k = 0; k < depth.size(); ++k) {
          if (depth[k] < cut || (depth[k] == cut && at_cut > 0)) {
            if (depth[k] == cut) --at_cut;
            map[k] = static_cast<int>(fr.points.size());
            fr.points.push_back(lifted[k]);
          }
        }
      } else {
        fr.points = std::move(lifted);
      }
    }
    remap.push_back(std::move(map));
    g.frames.push_back(std::move(fr));
  }

  for (std::size_t e = 0; e < edges.size(); ++e) {
    const json& je = edges[e];
    const std::string where = "edges[" + std::to_string(e) + "]";
    auto frame_ref = [&](const char* key) {
      const json& v = need(je, key, where);
      if (!v.is_string()) throw SchemaError(where + "." + key + " must be a frame id string");
      const auto it = index.find(v.get<std::string>());
      if (it == index.end()) throw SchemaError(where + "." + key + " references unknown frame '" + v.get<std::string>() + "'");
      return it->second;
    };
    Edge edge;
    edge.i = frame_ref("i");
    edge.j = frame_ref("j");
    if (edge.i == edge.j) throw SchemaError(where + " is a self loop");
    const json& ms = need(je, "matches", where);
    if (!ms.is_array()) throw SchemaError(where + ".matches must be an array");
    const auto ni = g.frames[static_cast<std::size_t>(edge.i)].points.size();
    const auto nj = g.frames[static_cast<std::size_t>(edge.j)].points.size();
    const auto& mi = remap[static_cast<std::size_t>(edge.i)];
    const auto& mj = remap[static_cast<std::size_t>(edge.j)];
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const std::string mw = where + ".matches[" + std::to_string(k) + "]";
      const json& m = ms[k];
      if (!m.is_array() || m.size() != 3) throw SchemaError(mw + " must be [ki, kj, w]");
      if (!m[0].is_number_integer() || !m[1].is_number_integer()) throw SchemaError(mw + " indices must be integers");
      long long ki = m[0].get<long long>(), kj = m[1].get<long long>();
      const double w = number(m[2], mw + " weight");
      if (w < 0.0) throw SchemaError(mw + " has a negative weight");
      const auto in_range = [](long long v, std::size_t n) { return v >= 0 && static_cast<std::size_t>(v) < n; };
      const std::size_t raw_i = mi.empty() ? ni : mi.size();
      const std::size_t raw_j = mj.empty() ? nj : mj.size();
      if (!in_range(ki, raw_i) || !in_range(kj, raw_j)) throw SchemaError(mw + " point index out of range");
      if (!mi.empty()) ki = mi[static_cast<std::size_t>(ki)];
      if (!mj.empty()) kj = mj[static_cast<std::size_t>(kj)];
      if (ki < 0 || kj < 0) continue;  // trimmed by depth
      edge.matches.push_back({static_cast<int>(ki), static_cast<int>(kj), w});
    }
    g.edges.push_back(std::move(edge));
  }
  canonicalize_edges(g);
  return g;
}

inline json graph_to_json(const ViewGraph& g) {
  using namespace io_detail;
  json frames = json::array();
  for (const auto& f : g.frames) {
    json jf = {{"id", f.id}};
    if (f.intrinsics)
      jf["intrinsics"] = {{"fx", f.intrinsics->fx}, {"fy", f.intrinsics->fy}, {"cx", f.intrinsics->cx}, {"cy", f.intrinsics->cy}};
    json pts = json::array();
    for (const auto& p : f.points) pts.push_back(to_json(p));
    jf["points"] = std::move(pts);
    frames.push_back(std::move(jf));
  }
  json edges = json::array();
  for (const auto& e : g.edges) {
    json ms = json::array();
    for (const auto& c : e.matches) ms.push_back(json::array({c.ki, c.kj, c.w}));
    edges.push_back({{"i", g.frames[static_cast<std::size_t>(e.i)].id},
                     {"j", g.frames[static_cast<std::size_t>(e.j)].id},
                     {"matches", std::move(ms)}});
  }
  return {{"frames", std::move(frames)}, {"edges", std::move(edges)}};
}

inline ViewGraph load_graph(const std::string& path, const LoadOptions& opt = {}) {
  return graph_from_json(io_detail::read_file(path), opt);
}

// `meta` (if not null) is stored under "meta" and ignored by the reader.
inline void save_graph(const std::string& path, const ViewGraph& g, const json& meta = nullptr) {
  json doc = graph_to_json(g);
  if (!meta.is_null()) doc["meta"] = meta;
  io_detail::write_file(path, doc);
}

inline json sim_config_to_json(const SimConfig& c) {
  return {{"dataset", to_string(c.dataset)},
          {"n_poses", c.n_poses},
          {"n_points", c.n_points},
          {"sigma", c.sigma},
          {"fov_deg", c.fov_deg},
          {"outlier_rate", c.outlier_rate},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"max_frame_gap", c.max_frame_gap},
          {"seed", c.seed}};
}

inline json truth_to_json(const ViewGraph& g, const GroundTruth& t) {
  json tr = json::array();
  for (std::size_t i = 0; i < t.transforms.size(); ++i)
    tr.push_back(io_detail::to_json(t.transforms[i], i < g.frames.size() ? g.frames[i].id : std::to_string(i)));
  json masks = json::array();
  for (const auto& m : t.inlier_masks) masks.push_back(json(std::vector<bool>(m)));
  return {{"transforms", std::move(tr)}, {"scales", t.scales}, {"inlier_masks", std::move(masks)}};
}

// Reads transforms and masks; world points are not stored.
inline GroundTruth truth_from_json(const json& doc) {
  using namespace io_detail;
  GroundTruth t;
  const json& tr = need(doc, "transforms", "ground truth");
  if (!tr.is_array()) throw SchemaError("ground truth 'transforms' must be an array");
  for (std::size_t i = 0; i < tr.size(); ++i)
    t.transforms.push_back(transform_from_json(tr[i], "transforms[" + std::to_string(i) + "]"));
  if (doc.contains("scales")) t.scales = doc.at("scales").get<std::vector<double>>();
  if (doc.contains("inlier_masks"))
    for (const auto& m : doc.at("inlier_masks")) t.inlier_masks.push_back(m.get<std::vector<bool>>());
  return t;
}

inline json solution_to_json(const ViewGraph& g, const SyncSolution& s) {
  json frames = json::array();
  for (std::size_t i = 0; i < s.transforms.size(); ++i)
    frames.push_back(io_detail::to_json(s.transforms[i], i < g.frames.size() ? g.frames[i].id : std::to_string(i)));
  return {{"frames", std::move(frames)},
          {"f_star", s.f_star},
          {"rho_hat", s.rho_hat},
          {"eta", s.eta},
          {"certified", s.certified},
          {"exact", s.exact},
          {"det_positive", s.det_positive},
          {"lambda", s.lambda},
          {"sdp_status", s.sdp_status},
          {"sdp_iterations", s.sdp_iterations},
          {"sdp_gap", s.sdp_gap},
          {"solve_ms", s.solve_ms}};
}

inline std::vector<SimilarityTransform> transforms_from_solution_json(const json& doc) {
  const json& frames = io_detail::need(doc, "frames", "solution");
  std::vector<SimilarityTransform> xs;
  for (std::size_t i = 0; i < frames.size(); ++i)
    xs.push_back(io_detail::transform_from_json(frames[i], "frames[" + std::to_string(i) + "]"));
  return xs;
}

}  // namespace simsync
