#include <gtest/gtest.h>

#include <sstream>

#include <simsync/simsync.hpp>

#include "helpers.hpp"

namespace simsync {
namespace {

Trajectory random_trajectory(Rng& rng, int n) {
  Trajectory xs = test::random_transforms(rng, n);
  xs = anchor_to_first(xs);
  for (auto& x : xs) x.t *= 3.0;
  return xs;
}

Mat3 axis_rotation(const Vec3& axis, double deg) { return Eigen::AngleAxisd(deg2rad(deg), axis.normalized()).matrix(); }

void expect_all_below(const MetricsReport& m, double tol) {
  EXPECT_LE(m.rot_err_deg, tol);
  EXPECT_LE(m.trans_err, tol);
  EXPECT_LE(m.scale_err, tol);
  EXPECT_LE(m.ate, tol);
  EXPECT_LE(m.rpe_t, tol);
  EXPECT_LE(m.rpe_r, tol);
}

TEST(Metrics, IdenticalTrajectoriesScoreZero) {
  Rng rng(1, "identical");
  const Trajectory gt = random_trajectory(rng, 7);
  const MetricsReport m = compute_metrics(gt, gt);
  // R R' differs from I by roundoff, so rotation terms are only near zero.
  EXPECT_LE(m.rot_err_deg, 1e-12);
  EXPECT_LE(m.rpe_r, 1e-12);
  EXPECT_EQ(m.trans_err, 0.0);
  EXPECT_EQ(m.scale_err, 0.0);
  EXPECT_EQ(m.ate, 0.0);
  EXPECT_EQ(m.rpe_t, 0.0);
}

TEST(Gauge, MedianScaleRestoresHalvedTranslations) {
  Rng rng(2, "median");
  const Trajectory gt = random_trajectory(rng, 6);
  Trajectory est = gt;
  for (auto& x : est) x.t *= 0.5;
  EXPECT_GT(compute_metrics(align_gauge(est, gt).est, gt).ate, 0.1);
  const auto a = align_gauge(est, gt, GaugeMode::median_scale);
  EXPECT_LE(compute_metrics(a.est, a.gt).ate, 1e-12);
}

TEST(Gauge, AnchoringRemovesGlobalSimilarity) {
  Rng rng(3, "gauge");
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory gt = random_trajectory(rng, 5);
    SimilarityTransform g;
    g.s = rng.uniform(0.5, 2.0);
    g.R = rng.rotation();
    g.t = rng.normal3(4.0);
    Trajectory est;
    for (const auto& x : gt) est.push_back(g * x);
    const auto a = align_gauge(est, gt);
    expect_all_below(compute_metrics(a.est, a.gt), 1e-9);
  }
}

TEST(Metrics, RigidGaugeInvariance) {
  Rng rng(4, "rigid-gauge");
  const Trajectory gt = random_trajectory(rng, 8);
  Trajectory est = gt;
  for (std::size_t i = 1; i < est.size(); ++i) {
    est[i].R = axis_rotation(rng.normal3(), 2.0) * est[i].R;
    est[i].t += rng.normal3(0.1);
    est[i].s *= 1.01;
  }
  const auto base = compute_metrics(align_gauge(est, gt).est, gt);
  SimilarityTransform g;
  g.R = rng.rotation();
  g.t = rng.normal3(5.0);
  Trajectory moved;
  for (const auto& x : est) moved.push_back(g * x);
  const auto a = align_gauge(moved, gt);
  const auto m = compute_metrics(a.est, a.gt);
  EXPECT_NEAR(m.rot_err_deg, base.rot_err_deg, 1e-9);
  EXPECT_NEAR(m.ate, base.ate, 1e-9);
  EXPECT_NEAR(m.rpe_t, base.rpe_t, 1e-9);
  EXPECT_NEAR(m.rpe_r, base.rpe_r, 1e-9);
  EXPECT_NEAR(m.scale_err, base.scale_err, 1e-12);
}

TEST(Metrics, SingleRotationPerturbation) {
  Rng rng(5, "perturb");
  const int n = 6, k = 3;
  const Trajectory gt = random_trajectory(rng, n);
  Trajectory est = gt;
  est[k].R = axis_rotation(Vec3(1, 2, 3), 10.0) * est[k].R;
  const auto m = compute_metrics(est, gt);
  EXPECT_NEAR(m.rot_err_deg, 10.0 / n, 1e-9);
  // Only pairs (k-1, k) and (k, k+1) see the change.
  EXPECT_NEAR(m.rpe_r, 2.0 * 10.0 / (n - 1), 1e-9);
  EXPECT_EQ(m.trans_err, 0.0);
}

TEST(Metrics, ConstantTranslationOffset) {
  Rng rng(6, "offset");
  for (int n : {2, 5, 9}) {
    const Trajectory gt = random_trajectory(rng, n);
    Trajectory est = gt;
    const Vec3 d(0.3, -0.4, 1.2);
    for (std::size_t i = 1; i < est.size(); ++i) est[i].t += d;
    const auto a = align_gauge(est, gt);
    EXPECT_NEAR(compute_metrics(a.est, a.gt).ate, d.norm() * std::sqrt((n - 1.0) / n), 1e-12);
  }
}

TEST(Metrics, AteIgnoresOrderingButRpeDoesNot) {
  Rng rng(7, "relabel");
  const Trajectory gt = random_trajectory(rng, 6);
  Trajectory est = gt;
  for (std::size_t i = 1; i < est.size(); ++i) est[i].t += rng.normal3(0.2);
  const std::vector<std::size_t> perm = {0, 4, 2, 5, 1, 3};
  Trajectory pe, pg;
  for (std::size_t i : perm) {
    pe.push_back(est[i]);
    pg.push_back(gt[i]);
  }
  const auto m = compute_metrics(est, gt), p = compute_metrics(pe, pg);
  EXPECT_NEAR(m.ate, p.ate, 1e-12);
  EXPECT_NEAR(m.trans_err, p.trans_err, 1e-12);
  EXPECT_GT(std::abs(m.rpe_t - p.rpe_t), 1e-6);
}

TEST(Metrics, NoiseFreeSolveIsExact) {
  SimConfig c;
  c.dataset = Dataset::circle;
  c.n_poses = 8;
  c.n_points = 300;
  c.sigma = 0.0;
  c.seed = 8;
  const SimInstance inst = simulate(c);
  const SyncSolution sol = solve_sync(inst.graph);
  ASSERT_TRUE(sol.certified);
  const auto a = align_gauge(sol.transforms, inst.truth.transforms);
  expect_all_below(compute_metrics(a.est, a.gt), 1e-7);
}

TEST(Gauge, UmeyamaAlignsPositions) {
  Rng rng(9, "umeyama-gauge");
  const Trajectory gt = random_trajectory(rng, 7);
  Trajectory est = gt;
  for (std::size_t i = 1; i < est.size(); ++i) est[i].t = 2.5 * axis_rotation(Vec3::UnitZ(), 30.0) * est[i].t;
  const auto a = align_gauge(est, gt, GaugeMode::umeyama);
  EXPECT_LE(compute_metrics(a.est, a.gt).ate, 1e-9);
  EXPECT_THROW(align_gauge(Trajectory(2), Trajectory(2), GaugeMode::umeyama), InputError);
  EXPECT_THROW(align_gauge(Trajectory(2), Trajectory(3)), InputError);
  EXPECT_THROW(align_gauge(Trajectory(3), Trajectory(3), GaugeMode::median_scale), InputError);
}

TEST(Gauge, ModeNames) {
  for (GaugeMode m : {GaugeMode::anchor, GaugeMode::median_scale, GaugeMode::umeyama})
    EXPECT_EQ(parse_gauge_mode(to_string(m)), m);
  EXPECT_EQ(parse_gauge_mode("median-scale"), GaugeMode::median_scale);
  EXPECT_THROW(parse_gauge_mode("sim3"), InputError);
}

TEST(Csv, HeaderRowsAndProvenance) {
  CsvRow r;
  r.seed = 42;
  r.dataset = "grid";
  r.n_poses = 100;
  r.sigma = 0.01;
  r.lambda = 200;
  r.method = "plain";
  r.metrics.ate = 0.125;
  r.certified = true;
  r.wall_ms = 12.5;
  std::ostringstream os;
  write_csv(os, {r, r}, "simsync test");
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# simsync test");
  std::getline(is, line);
  EXPECT_EQ(line, csv_header());
  std::getline(is, line);
  EXPECT_EQ(line, "42,grid,100,0.01,200,0,plain,0,0,0,0.125,0,0,0,1,12.500");
  const std::string header = csv_header();
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(line.begin(), line.end(), ','));
  std::ostringstream bare;
  write_csv(bare, {});
  EXPECT_EQ(bare.str(), std::string(csv_header()) + "\n");
}

TEST(Metrics, MeanScale) {
  Trajectory xs(3);
  xs[1].s = 2.0;
  xs[2].s = 0.5;
  EXPECT_DOUBLE_EQ(mean_scale(xs), 3.5 / 3.0);
  EXPECT_EQ(mean_scale({}), 0.0);
}

}  // namespace
}  // namespace simsync
