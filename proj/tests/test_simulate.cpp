#include <gtest/gtest.h>

#include <simsync/simsync.hpp>

#include "helpers.hpp"

namespace simsync {
namespace {

SimConfig config(Dataset d, int n, int points, double sigma, std::uint64_t seed) {
  SimConfig c;
  c.dataset = d;
  c.n_poses = n;
  c.n_points = points;
  c.sigma = sigma;
  c.seed = seed;
  return c;
}

TEST(Simulate, SameSeedSameInstance) {
  SimConfig c = config(Dataset::grid, 30, 300, 0.01, 11);
  c.outlier_rate = 0.2;
  const SimInstance a = simulate(c), b = simulate(c);
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_EQ(a.truth.scales, b.truth.scales);
  EXPECT_EQ(a.truth.inlier_masks, b.truth.inlier_masks);
  EXPECT_EQ(a.truth.world_points, b.truth.world_points);
  c.seed = 12;
  EXPECT_NE(simulate(c).graph, a.graph);
}

TEST(Trajectory, CircleOfFour) {
  const auto poses = gen_trajectory(config(Dataset::circle, 4, 100, 0.0, 0));
  ASSERT_EQ(poses.size(), 4u);
  const Vec3 expected[] = {{10, 0, 0}, {0, 10, 0}, {-10, 0, 0}, {0, -10, 0}};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LE((poses[k].center() - expected[k]).norm(), 1e-12);
    // Optical axis toward the origin.
    EXPECT_LE((poses[k].R.row(2).transpose() + expected[k] / 10.0).norm(), 1e-12);
    EXPECT_NEAR(poses[k].R.determinant(), 1.0, 1e-12);
  }
}

TEST(Trajectory, LineOfTwo) {
  const auto poses = gen_trajectory(config(Dataset::line, 2, 100, 0.0, 0));
  EXPECT_LE((poses[0].center() - Vec3(-1.5, -10.0, 0.0)).norm(), 1e-12);
  EXPECT_LE((poses[1].center() - Vec3(1.5, -10.0, 0.0)).norm(), 1e-12);
  EXPECT_NEAR((poses[1].center() - poses[0].center()).norm(), 3.0, 1e-12);
}

TEST(Trajectory, GridWalksCubeSurface) {
  const auto poses = gen_trajectory(config(Dataset::grid, 200, 100, 0.0, 5));
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Vec3 c = poses[k].center();
    EXPECT_NEAR(c.cwiseAbs().maxCoeff(), 1.0, 1e-12);
    EXPECT_LE((c - c.array().round().matrix()).norm(), 1e-12);
    if (k > 0) EXPECT_NEAR((c - poses[k - 1].center()).norm(), 1.0, 1e-12);
  }
  EXPECT_EQ(grid_surface_nodes().size(), 26u);
}

TEST(Observe, NoiseHasRequestedSpread) {
  const Mat3X world = Mat3X::Zero(3, 20000);
  const auto clouds = observe({CameraPose{}}, world, 0.1, 3);
  const Mat3X& c = clouds.front();
  for (int r = 0; r < 3; ++r) {
    const double mean = c.row(r).mean();
    const double sd = std::sqrt((c.row(r).array() - mean).square().sum() / (c.cols() - 1.0));
    EXPECT_NEAR(sd, 0.1, 0.005);
  }
  EXPECT_EQ(observe({CameraPose{}}, world, 0.0, 3).front(), world);
}

TEST(Simulate, NoiseFreeInstanceHasZeroCostAndCertifies) {
  const SimInstance inst = simulate(config(Dataset::circle, 8, 300, 0.0, 4));
  long matches = 0;
  for (const auto& e : inst.graph.edges) matches += static_cast<long>(e.matches.size());
  EXPECT_LE(evaluate_objective(inst.graph, inst.truth.transforms), 1e-20 * static_cast<double>(matches));
  const SyncSolution sol = solve_sync(inst.graph);
  EXPECT_TRUE(sol.certified);
  for (std::size_t i = 0; i < sol.transforms.size(); ++i)
    EXPECT_NEAR(sol.transforms[i].s, inst.truth.transforms[i].s, 1e-8) << "frame " << i;
}

TEST(Fov, WiderFieldSeesMore) {
  const SimConfig c = config(Dataset::circle, 6, 400, 0.0, 6);
  const auto world = sample_world_points(c);
  const auto clouds = observe(gen_trajectory(c), world, 0.0, c.seed);
  std::size_t prev_pairs = 0, prev_edges = 0;
  for (double fov : {20.0, 40.0, 60.0, 90.0, 180.0, 360.0}) {
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < clouds.size(); ++i)
      for (std::size_t j = i + 1; j < clouds.size(); ++j) pairs += covisible(clouds[i], clouds[j], fov).size();
    const std::size_t edges = fov_correspondences(clouds, fov, c.seed).size();
    EXPECT_GE(pairs, prev_pairs) << fov;
    EXPECT_GE(edges, prev_edges) << fov;
    prev_pairs = pairs;
    prev_edges = edges;
  }
  EXPECT_EQ(covisible(clouds[0], clouds[3], 360.0).size(), 400u);
  EXPECT_FALSE(in_fov(Vec3::Zero(), 360.0));
}

TEST(Fov, CoincidentCamerasShareEveryVisiblePoint) {
  const SimConfig c = config(Dataset::circle, 4, 300, 0.0, 7);
  const auto world = sample_world_points(c);
  const auto pose = gen_trajectory(c).front();
  const auto clouds = observe({pose, pose}, world, 0.0, c.seed);
  const auto vis = covisible(clouds[0], clouds[1], c.fov_deg);
  std::size_t single = 0;
  for (Eigen::Index k = 0; k < clouds[0].cols(); ++k) single += in_fov(clouds[0].col(k), c.fov_deg);
  EXPECT_EQ(vis.size(), single);
  const auto edges = fov_correspondences(clouds, c.fov_deg, c.seed);
  ASSERT_EQ(edges.size(), 1u);
  ViewGraph g;
  for (const auto& cl : clouds) {
    Frame f;
    for (Eigen::Index k = 0; k < cl.cols(); ++k) f.points.emplace_back(cl.col(k));
    g.frames.push_back(f);
  }
  g.edges = edges;
  const auto ec = edge_clouds(g, g.edges.front());
  const auto r = weighted_umeyama(ec.pj, ec.pi, ec.w).transform;
  EXPECT_NEAR(r.s, 1.0, 1e-10);
  EXPECT_LE((r.R - Mat3::Identity()).norm(), 1e-10);
}

TEST(Scales, UnitRangeAndReproducibility) {
  SimConfig c = config(Dataset::line, 5, 200, 0.0, 8);
  c.scale_min = c.scale_max = 1.0;
  for (double s : simulate(c).truth.scales) EXPECT_EQ(s, 1.0);
  c.scale_min = 0.5;
  c.scale_max = 2.0;
  const auto a = simulate(c).truth.scales;
  EXPECT_EQ(a, simulate(c).truth.scales);
  EXPECT_EQ(a.front(), 1.0);
  for (double s : a) {
    EXPECT_GE(s, 0.5);
    EXPECT_LE(s, 2.0);
  }
  c.seed = 9;
  EXPECT_NE(a, simulate(c).truth.scales);
}

TEST(Outliers, CountPerEdge) {
  Rng rng(10, "outlier-count");
  const auto xs = test::random_transforms(rng, 2);
  ViewGraph g = test::consistent_graph(rng, xs, 40, 0.0, 1);
  const auto masks = inject_outliers(g, 0.5, 1, xs);
  ASSERT_EQ(masks.size(), 1u);
  EXPECT_EQ(std::count(masks[0].begin(), masks[0].end(), false), 20);
  const std::size_t before = g.frames[1].points.size();
  ViewGraph h = test::consistent_graph(rng, xs, 41, 0.0, 1);
  const auto m2 = inject_outliers(h, 0.5, 1);
  EXPECT_EQ(std::count(m2[0].begin(), m2[0].end(), false), 20);
  EXPECT_EQ(before, 160u + 20u);
  EXPECT_THROW(inject_outliers(g, 1.0, 1), InputError);
}

TEST(Outliers, AlmostAllExceedTheInlierBound) {
  SimConfig c = config(Dataset::circle, 8, 500, 0.01, 11);
  c.outlier_rate = 0.3;
  const SimInstance inst = simulate(c);
  const double beta = noise_bound_global(0.01);
  long outliers = 0, above = 0;
  for (std::size_t e = 0; e < inst.graph.edges.size(); ++e) {
    const auto& edge = inst.graph.edges[e];
    const auto& xi = inst.truth.transforms[static_cast<std::size_t>(edge.i)];
    const auto& xj = inst.truth.transforms[static_cast<std::size_t>(edge.j)];
    for (std::size_t k = 0; k < edge.matches.size(); ++k) {
      if (inst.truth.inlier_masks[e][k]) continue;
      const auto& m = edge.matches[k];
      const Vec3 pi = inst.graph.frames[static_cast<std::size_t>(edge.i)].points[static_cast<std::size_t>(m.ki)];
      const Vec3 pj = inst.graph.frames[static_cast<std::size_t>(edge.j)].points[static_cast<std::size_t>(m.kj)];
      ++outliers;
      above += (xi.apply(pi) - xj.apply(pj)).norm() > beta;
    }
  }
  ASSERT_GT(outliers, 0);
  EXPECT_GE(static_cast<double>(above), 0.99 * static_cast<double>(outliers));
}

TEST(Simulate, RejectsInvalidConfigs) {
  const SimConfig ok = config(Dataset::circle, 4, 100, 0.01, 0);
  auto bad = [&](auto edit) {
    SimConfig c = ok;
    edit(c);
    EXPECT_THROW(simulate(c), InputError);
  };
  bad([](SimConfig& c) { c.n_poses = 1; });
  bad([](SimConfig& c) { c.n_points = 5; });
  bad([](SimConfig& c) { c.sigma = -0.1; });
  bad([](SimConfig& c) { c.fov_deg = 0.0; });
  bad([](SimConfig& c) { c.fov_deg = 400.0; });
  bad([](SimConfig& c) { c.outlier_rate = 1.0; });
  bad([](SimConfig& c) { c.scale_min = 0.0; });
  bad([](SimConfig& c) { c.scale_max = 0.5; });
  bad([](SimConfig& c) { c.fov_deg = 1.0; });  // nothing covisible
  EXPECT_THROW(parse_dataset("spiral"), InputError);
  EXPECT_EQ(parse_dataset("grid"), Dataset::grid);
}

}  // namespace
}  // namespace simsync
