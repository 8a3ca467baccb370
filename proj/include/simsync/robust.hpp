#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "simsync/parallel.hpp"
#include "simsync/registration.hpp"
#include "simsync/sdp.hpp"
#include "simsync/types.hpp"
#include "simsync/view_graph.hpp"

namespace simsync {

struct GncSettings {
  double beta = 0.0;  // inlier bound on the residual norm
  double mu_update = 1.4;
  int max_outer_iters = 100;
  double weight_tol = 1e-6;  // stop when sum |w_new - w_old| drops below this

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("GNC beta must be positive");
    if (!(mu_update > 1.0)) throw InputError("GNC mu_update must exceed 1");
    if (max_outer_iters < 1) throw InputError("GNC max_outer_iters must be >= 1");
    if (!(weight_tol > 0.0)) throw InputError("GNC weight_tol must be positive");
  }
};

// Surrogate values of one outer iteration at fixed mu: before the weight
// update, after it, and after the weighted solve.
struct GncStep {
  double mu = 0.0;
  double before = 0.0;
  double after_weights = 0.0;
  double after_solve = 0.0;
};

struct GncOutcome {
  Vec weights;
  std::vector<bool> inlier_mask;  // weights >= 0.5
  int iterations = 0;             // weighted solves after the initial one
  bool converged = false;
  std::vector<GncStep> trace;
};

template <class Solution>
struct RobustResult : GncOutcome {
  Solution solution{};
};

namespace gnc {

inline double tls_weight(double r2, double beta2, double mu) {
  if (r2 <= mu / (mu + 1.0) * beta2) return 1.0;
  if (r2 >= (mu + 1.0) / mu * beta2) return 0.0;
  return std::clamp(std::sqrt(beta2 / r2 * mu * (mu + 1.0)) - mu, 0.0, 1.0);
}

// sum_k b_k (w_k r_k^2 + mu (1 - w_k) beta^2 / (mu + w_k))
inline double surrogate(const Vec& r, const Vec& w, const Vec& base, double beta2, double mu) {
  double j = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k)
    j += base(k) * (w(k) * r(k) * r(k) + mu * (1.0 - w(k)) * beta2 / (mu + w(k)));
  return j;
}

inline bool is_binary(const Vec& w, double tol = 1e-3) {
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (std::min(w(k), 1.0 - w(k)) > tol) return false;
  return true;
}

}  // namespace gnc

// Graduated non-convexity for truncated least squares. `solve` receives the
// current weights (one per residual) and must minimise sum b_k w_k r_k^2;
// `residuals` returns the norms r_k at the latest solution. `base` holds the
// fixed measurement weights b_k (empty means all ones).
inline GncOutcome gnc_tls(int m, const std::function<void(const Vec&)>& solve,
                          const std::function<Vec()>& residuals, const GncSettings& settings,
                          const Vec& base = Vec()) {
  settings.validate();
  if (m < 1) throw InputError("GNC needs at least one residual");
  if (base.size() != 0 && base.size() != m) throw InputError("GNC base weight count mismatch");
  const Vec b = base.size() ? base : Vec::Ones(m);
  const double beta2 = settings.beta * settings.beta;

  auto fetch = [&](int iter) {
    Vec r = residuals();
    if (r.size() != m) throw InputError("GNC residual callback returned the wrong count");
    for (Eigen::Index k = 0; k < m; ++k)
      if (!std::isfinite(r(k)))
        throw NumericalError("GNC: non-finite residual at index " + std::to_string(k) + " in outer iteration " +
                             std::to_string(iter));
    return r;
  };

  GncOutcome out;
  Vec w = Vec::Ones(m);
  solve(w);
  Vec r = fetch(0);
  const double r2max = r.cwiseAbs2().maxCoeff();
  if (r2max <= beta2) {
    out.converged = true;
  } else {
    double mu = beta2 / (2.0 * r2max - beta2);
    for (int it = 1; it <= settings.max_outer_iters; ++it) {
      GncStep step;
      step.mu = mu;
      step.before = gnc::surrogate(r, w, b, beta2, mu);
      Vec w_new(m);
      for (Eigen::Index k = 0; k < m; ++k) w_new(k) = gnc::tls_weight(r(k) * r(k), beta2, mu);
      step.after_weights = gnc::surrogate(r, w_new, b, beta2, mu);
      solve(w_new);
      r = fetch(it);
      step.after_solve = gnc::surrogate(r, w_new, b, beta2, mu);
      out.trace.push_back(step);
      out.iterations = it;
      const double change = (w_new - w).cwiseAbs().sum();
      w = std::move(w_new);
      if (change < settings.weight_tol && gnc::is_binary(w)) {
        out.converged = true;
        break;
      }
      mu *= settings.mu_update;
    }
  }
  out.weights = w;
  out.inlier_mask.resize(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) out.inlier_mask[static_cast<std::size_t>(k)] = w(k) >= 0.5;
  return out;
}

// Residual norms |x_i(p_i) - x_j(p_j)| of every correspondence, edge by edge.
inline Vec correspondence_residuals(const ViewGraph& g, const std::vector<SimilarityTransform>& xs) {
  std::size_t m = 0;
  for (const auto& e : g.edges) m += e.matches.size();
  Vec r(static_cast<Eigen::Index>(m));
  Eigen::Index k = 0;
  for (const auto& e : g.edges) {
    const auto& xi = xs[static_cast<std::size_t>(e.i)];
    const auto& xj = xs[static_cast<std::size_t>(e.j)];
    const auto& fi = g.frames[static_cast<std::size_t>(e.i)].points;
    const auto& fj = g.frames[static_cast<std::size_t>(e.j)].points;
    for (const auto& c : e.matches)
      r(k++) = (xi.apply(fi[static_cast<std::size_t>(c.ki)]) - xj.apply(fj[static_cast<std::size_t>(c.kj)])).norm();
  }
  return r;
}

// Splits a flat per-correspondence vector into per-edge masks.
inline std::vector<std::vector<bool>> split_mask(const ViewGraph& g, const std::vector<bool>& flat) {
  std::vector<std::vector<bool>> out;
  std::size_t k = 0;
  for (const auto& e : g.edges) {
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(k),
                     flat.begin() + static_cast<std::ptrdiff_t>(k + e.matches.size()));
    k += e.matches.size();
  }
  return out;
}

// Whole-problem robust synchronisation: every weighted solve is the full
// relaxation pipeline on the reweighted graph.
inline RobustResult<SyncSolution> simsync_gnc(const ViewGraph& g, const GncSettings& settings,
                                              const SyncOptions& options = {}) {
  require_valid(g);
  ViewGraph work = g;
  Vec base;
  {
    std::vector<double> b;
    for (const auto& e : g.edges)
      for (const auto& c : e.matches) b.push_back(c.w);
    base = Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  SyncSolution current;
  auto solve = [&](const Vec& w) {
    Eigen::Index k = 0;
    for (std::size_t e = 0; e < work.edges.size(); ++e)
      for (std::size_t c = 0; c < work.edges[e].matches.size(); ++c, ++k)
        work.edges[e].matches[c].w = g.edges[e].matches[c].w * w(k);
    current = solve_sync(work, options);
  };
  auto residuals = [&] { return correspondence_residuals(g, current.transforms); };
  RobustResult<SyncSolution> out;
  static_cast<GncOutcome&>(out) = gnc_tls(static_cast<int>(base.size()), solve, residuals, settings, base);
  out.solution = std::move(current);
  return out;
}

// Result of pruning a graph edge by edge.
struct PruneResult {
  ViewGraph graph;                                     // surviving edges, inlier matches only
  std::vector<std::vector<bool>> masks;                // per input edge
  std::vector<std::pair<int, int>> dropped_edges;      // fewer than 3 inliers
  std::vector<RobustResult<EdgeRegistration>> edges;   // per input edge (GNC pruning only)
  std::vector<std::string> edge_errors;                // per input edge, empty when fine
};

inline constexpr int kMinEdgeInliers = 3;

namespace detail {

inline std::string describe_cut(const ViewGraph& g) {
  const int n = g.num_frames();
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  std::function<int(int)> find = [&](int x) {
    return parent[static_cast<std::size_t>(x)] == x ? x : parent[static_cast<std::size_t>(x)] = find(parent[static_cast<std::size_t>(x)]);
  };
  for (const auto& e : g.edges) {
    if (e.total_weight() <= 0.0) continue;
    const int a = find(e.i), b = find(e.j);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  std::ostringstream os;
  os << "frames separated from frame " << g.frames.front().id << ": {";
  bool first = true;
  for (int i = 0; i < n; ++i) {
    if (find(i) == find(0)) continue;
    os << (first ? "" : ", ") << g.frames[static_cast<std::size_t>(i)].id;
    first = false;
  }
  os << "}";
  return os.str();
}

// Keeps masked matches, drops edges with too few inliers, and checks that
// the result is still connected.
inline void finish_prune(const ViewGraph& g, PruneResult& out) {
  out.graph.frames = g.frames;
  out.graph.edges.clear();
  out.dropped_edges.clear();
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    const auto& mask = out.masks[e];
    Edge kept{edge.i, edge.j, {}};
    for (std::size_t k = 0; k < edge.matches.size(); ++k)
      if (mask[k]) kept.matches.push_back(edge.matches[k]);
    if (static_cast<int>(kept.matches.size()) < kMinEdgeInliers || !(kept.total_weight() > 0.0)) {
      out.dropped_edges.emplace_back(edge.i, edge.j);
      continue;
    }
    out.graph.edges.push_back(std::move(kept));
  }
  const auto rep = validate(out.graph);
  if (!rep.effectively_connected) {
    std::ostringstream os;
    os << "pruning disconnected the view graph; " << describe_cut(out.graph) << "; dropped edges:";
    for (auto [i, j] : out.dropped_edges) os << " (" << i << "," << j << ")";
    throw InputError(os.str());
  }
}

}  // namespace detail

// Per-edge robust scaled registration; matches with final weight < 0.5 are
// removed. The edge bound `settings.beta` is in the units of the i-side cloud.
inline PruneResult edge_prune_gnc(const ViewGraph& g, const GncSettings& settings) {
  settings.validate();
  require_valid(g);
  for (const auto& e : g.edges)
    if (static_cast<int>(e.matches.size()) < kMinEdgeInliers)
      throw InputError("edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ") has fewer than 3 matches");

  PruneResult out;
  const std::size_t ne = g.edges.size();
  out.masks.resize(ne);
  out.edges.resize(ne);
  out.edge_errors.resize(ne);
  parallel_for(static_cast<int>(ne), [&](int idx) {
    const auto e = static_cast<std::size_t>(idx);
    const auto c = edge_clouds(g, g.edges[e]);
    auto& res = out.edges[e];
    auto solve = [&](const Vec& w) { res.solution = weighted_umeyama(c.pj, c.pi, (c.w.array() * w.array()).matrix()); };
    auto residuals = [&]() -> Vec { return res.solution.residuals.colwise().norm().transpose(); };
    try {
      static_cast<GncOutcome&>(res) = gnc_tls(static_cast<int>(c.w.size()), solve, residuals, settings, c.w);
      out.masks[e] = res.inlier_mask;
    } catch (const std::exception& ex) {
      // A degenerate weighted subset means the edge cannot be trusted.
      out.edge_errors[e] = ex.what();
      out.masks[e].assign(g.edges[e].matches.size(), false);
    }
  });
  detail::finish_prune(g, out);
  return out;
}

// Inputs of a user-supplied pruner for one edge.
struct PruneInput {
  int i = 0;
  int j = 0;
  const Mat3X& points_i;
  const Mat3X& points_j;
  const Vec& weights;
};

using PruneFn = std::function<std::vector<bool>(const PruneInput&)>;

inline PruneResult external_prune_hook(const ViewGraph& g, const PruneFn& prune) {
  require_valid(g);
  PruneResult out;
  out.masks.resize(g.edges.size());
  out.edge_errors.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto c = edge_clouds(g, g.edges[e]);
    auto mask = prune(PruneInput{g.edges[e].i, g.edges[e].j, c.pi, c.pj, c.w});
    if (mask.size() != g.edges[e].matches.size())
      throw InputError("pruner returned a mask of the wrong length for edge (" + std::to_string(g.edges[e].i) + "," +
                       std::to_string(g.edges[e].j) + ")");
    out.masks[e] = std::move(mask);
  }
  detail::finish_prune(g, out);
  return out;
}

// Keeps matches whose residual under the given transforms is at most beta.
inline PruneFn oracle_pruner(std::vector<SimilarityTransform> truth, double beta) {
  if (!(beta > 0.0)) throw InputError("oracle threshold must be positive");
  return [truth = std::move(truth), beta](const PruneInput& in) {
    const auto n = static_cast<std::size_t>(std::max(in.i, in.j));
    if (n >= truth.size()) throw InputError("oracle pruner has no transform for frame " + std::to_string(n));
    const auto& xi = truth[static_cast<std::size_t>(in.i)];
    const auto& xj = truth[static_cast<std::size_t>(in.j)];
    std::vector<bool> mask(static_cast<std::size_t>(in.points_i.cols()));
    for (Eigen::Index k = 0; k < in.points_i.cols(); ++k)
      mask[static_cast<std::size_t>(k)] = (xi.apply(in.points_i.col(k)) - xj.apply(in.points_j.col(k))).norm() <= beta;
    return mask;
  };
}

}  // namespace simsync
