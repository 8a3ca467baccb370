#pragma once

#include <vector>

#include "acceptance/criteria.hpp"
#include "simsync/simsync.hpp"

namespace simsync::test {

using acceptance::detail::inlier_subgraph;
using acceptance::detail::random_graph;
using acceptance::detail::random_transforms;

// Graph whose frame clouds are exact images of shared world points under the
// given frame-to-reference transforms, plus optional isotropic noise.
// Every pair (i, j) within `gap` frames gets `per_edge` matches.
inline ViewGraph consistent_graph(Rng& rng, const std::vector<SimilarityTransform>& xs, int per_edge,
                                  double sigma = 0.0, int gap = 2) {
  const int n = static_cast<int>(xs.size());
  const int n_world = 4 * per_edge;
  std::vector<Vec3> world;
  for (int k = 0; k < n_world; ++k) world.push_back(rng.normal3(2.0));
  ViewGraph g;
  for (int i = 0; i < n; ++i) {
    Frame f;
    f.id = "f" + std::to_string(i);
    const SimilarityTransform inv = xs[static_cast<std::size_t>(i)].inverse();
    for (const auto& w : world) f.points.push_back(inv.apply(w) + rng.normal3(sigma));
    g.frames.push_back(std::move(f));
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n && j - i <= gap; ++j) {
      Edge e{i, j, {}};
      for (int k = 0; k < per_edge; ++k) {
        const int p = rng.uniform_int(0, n_world - 1);
        e.matches.push_back({p, p, 1.0});
      }
      g.edges.push_back(std::move(e));
    }
  return g;
}

inline double max_transform_gap(const std::vector<SimilarityTransform>& a, const std::vector<SimilarityTransform>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i].s - b[i].s));
    worst = std::max(worst, (a[i].R - b[i].R).norm());
    worst = std::max(worst, (a[i].t - b[i].t).norm());
  }
  return worst;
}

}  // namespace simsync::test
