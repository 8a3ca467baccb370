#include <gtest/gtest.h>

#include <simsync/simsync.hpp>

#include "helpers.hpp"

namespace simsync {
namespace {

Mat3X random_cloud(Rng& rng, int n, double spread = 1.0) {
  Mat3X x(3, n);
  for (int k = 0; k < n; ++k) x.col(k) = rng.normal3(spread);
  return x;
}

Mat3X transform(const SimilarityTransform& t, const Mat3X& x) { return (t.s * t.R * x).colwise() + t.t; }

TEST(Umeyama, IdentityOnEqualClouds) {
  Rng rng(1, "identity");
  const Mat3X x = random_cloud(rng, 10);
  const auto r = weighted_umeyama(x, x, Vec::Ones(10)).transform;
  EXPECT_NEAR(r.s, 1.0, 1e-12);
  EXPECT_LE((r.R - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LE(r.t.norm(), 1e-12);
}

TEST(Umeyama, RecoversGeneratingSimilarity) {
  Rng rng(2, "forward");
  for (int trial = 0; trial < 50; ++trial) {
    SimilarityTransform g;
    g.s = 2.0;
    g.R = rng.rotation();
    g.t = rng.normal3(5.0);
    const Mat3X x = random_cloud(rng, 8);
    Vec w(8);
    for (int k = 0; k < 8; ++k) w(k) = rng.uniform(0.1, 3.0);
    const auto r = weighted_umeyama(x, transform(g, x), w);
    EXPECT_NEAR(r.transform.s, 2.0, 1e-10);
    EXPECT_LE((r.transform.R - g.R).norm(), 1e-10);
    EXPECT_LE((r.transform.t - g.t).norm(), 1e-10);
    EXPECT_LE(r.residuals.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Umeyama, EqualWeightsMatchUnweightedScaling) {
  Rng rng(3, "equal-weights");
  const Mat3X x = random_cloud(rng, 12);
  const Mat3X y = random_cloud(rng, 12);
  const auto a = weighted_umeyama(x, y, Vec::Ones(12)).transform;
  const auto b = weighted_umeyama(x, y, Vec::Constant(12, 7.5)).transform;
  EXPECT_NEAR(a.s, b.s, 1e-12);
  EXPECT_LE((a.R - b.R).norm(), 1e-12);
  EXPECT_LE((a.t - b.t).norm(), 1e-12);
}

TEST(Umeyama, ZeroWeightIgnoresPoint) {
  Rng rng(4, "zero-weight");
  SimilarityTransform g;
  g.s = 0.7;
  g.R = rng.rotation();
  g.t = rng.normal3();
  const Mat3X x = random_cloud(rng, 10);
  Mat3X y = transform(g, x);
  y.col(3) += Vec3(50, -20, 9);
  Vec w = Vec::Ones(10);
  w(3) = 0.0;
  const auto r = weighted_umeyama(x, y, w).transform;
  EXPECT_NEAR(r.s, g.s, 1e-10);
  EXPECT_LE((r.R - g.R).norm(), 1e-10);
}

// Data generated by a reflection: the result is still a rotation, and its
// cost equals the better of the two sign branches solved by brute force.
TEST(Umeyama, NearReflectionPicksBestRotation) {
  Rng rng(5, "reflection");
  for (int trial = 0; trial < 30; ++trial) {
    Mat3 m = rng.rotation();
    m.col(0) *= -1.0;
    const Mat3X x = random_cloud(rng, 15);
    Mat3X y = 1.3 * m * x;
    y += random_cloud(rng, 15, 0.05);
    const Vec w = Vec::Ones(15);
    const auto r = weighted_umeyama(x, y, w);
    EXPECT_NEAR(r.transform.R.determinant(), 1.0, 1e-12);

    const Vec3 mx = x.rowwise().mean(), my = y.rowwise().mean();
    const Mat3X a = y.colwise() - my, b = x.colwise() - mx;
    Eigen::JacobiSVD<Mat3> svd(a * b.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    double best = INFINITY;
    for (double sign : {1.0, -1.0}) {
      Mat3 s = Mat3::Identity();
      s(2, 2) = sign;
      SimilarityTransform t;
      t.R = svd.matrixU() * s * svd.matrixV().transpose();
      if (t.R.determinant() < 0.0) continue;
      t.s = (svd.singularValues().asDiagonal() * s).trace() / b.squaredNorm();
      t.t = my - t.s * t.R * mx;
      best = std::min(best, registration_cost(t, x, y, w));
    }
    EXPECT_NEAR(registration_cost(r.transform, x, y, w), best, 1e-10 * (1.0 + best));
  }
}

// Random similarities never beat the closed form on tiny instances.
TEST(Umeyama, GlobalOptimalityMonteCarlo) {
  Rng rng(6, "global");
  for (int inst = 0; inst < 3; ++inst) {
    const Mat3X x = random_cloud(rng, 4), y = random_cloud(rng, 4);
    Vec w(4);
    for (int k = 0; k < 4; ++k) w(k) = rng.uniform(0.2, 2.0);
    const auto best = weighted_umeyama(x, y, w);
    const double c = registration_cost(best.transform, x, y, w);
    int violations = 0;
    for (int k = 0; k < 100000; ++k) {
      SimilarityTransform t;
      t.s = rng.uniform(0.0, 3.0);
      t.R = rng.rotation();
      t.t = rng.normal3(1.5);
      violations += registration_cost(t, x, y, w) < c - 1e-12;
    }
    EXPECT_EQ(violations, 0);
  }
}

TEST(Arun, FixesUnitScale) {
  Rng rng(7, "arun");
  SimilarityTransform g;
  g.R = rng.rotation();
  g.t = rng.normal3();
  const Mat3X x = random_cloud(rng, 9);
  const auto r = weighted_arun(x, transform(g, x) * 1.0, Vec::Ones(9)).transform;
  EXPECT_EQ(r.s, 1.0);
  EXPECT_LE((r.R - g.R).norm(), 1e-10);
}

TEST(Registration, RejectsDegenerateInputs) {
  Rng rng(8, "degenerate");
  const Mat3X x = random_cloud(rng, 5);
  EXPECT_THROW(weighted_umeyama(x.leftCols(2), x.leftCols(2), Vec::Ones(2)), InputError);
  EXPECT_THROW(weighted_umeyama(x, x, Vec::Ones(4)), InputError);
  EXPECT_THROW(weighted_umeyama(x, x, -Vec::Ones(5)), InputError);
  EXPECT_THROW(weighted_umeyama(x, x, Vec::Zero(5)), InputError);
  const Mat3X same = Vec3(1, 2, 3).replicate(1, 5);
  EXPECT_THROW(weighted_umeyama(same, same, Vec::Ones(5)), NumericalError);
}

TEST(ArunCovariance, ScalesWithSigmaSquared) {
  Rng rng(9, "cov-scaling");
  const Mat3X x = random_cloud(rng, 30, 2.0);
  const Mat3 r = rng.rotation();
  const auto a = arun_covariance(x, r, 0.01);
  const auto b = arun_covariance(x, r, 0.001);
  EXPECT_LE((a - 100.0 * b).norm(), 1e-12 * a.norm());
  EXPECT_LE((a - a.transpose()).norm(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(a);
  EXPECT_GT(eig.eigenvalues()(0), 0.0);
}

TEST(ArunCovariance, DuplicatedPointsHalveCovariance) {
  Rng rng(10, "cov-dup");
  const Mat3X x = random_cloud(rng, 20);
  Mat3X xx(3, 40);
  xx << x, x;
  const Mat3 r = rng.rotation();
  EXPECT_LE((arun_covariance(xx, r, 0.02) - 0.5 * arun_covariance(x, r, 0.02)).norm(),
            1e-12 * arun_covariance(x, r, 0.02).norm());
}

TEST(ArunCovariance, InvariantToRelabeling) {
  Rng rng(11, "cov-perm");
  const Mat3X x = random_cloud(rng, 25);
  Mat3X p(3, 25);
  for (int k = 0; k < 25; ++k) p.col(k) = x.col((7 * k) % 25);
  const Mat3 r = rng.rotation();
  EXPECT_LE((arun_covariance(x, r, 0.01) - arun_covariance(p, r, 0.01)).norm(),
            1e-12 * arun_covariance(x, r, 0.01).norm());
}

TEST(ArunCovariance, RejectsCollinearPoints) {
  Mat3X x(3, 5);
  for (int k = 0; k < 5; ++k) x.col(k) = Vec3(k, 2.0 * k, -k);
  EXPECT_THROW(arun_covariance(x, Mat3::Identity(), 0.01), NumericalError);
  EXPECT_THROW(arun_covariance(x, Mat3::Identity(), 0.0), InputError);
}

TEST(NoiseBound, Examples) {
  EXPECT_NEAR(noise_bound_global(1.0), std::sqrt(42.22), 1e-12);
  EXPECT_NEAR(noise_bound_global(1.0), 6.4977, 5e-5);
  EXPECT_NEAR(noise_bound_global(0.01), 0.064977, 5e-7);
  EXPECT_NEAR(noise_bound_edge(0.01, 2.0), std::sqrt(42.22) * 0.01 / 2.0, 1e-15);
  EXPECT_NEAR(noise_bound_edge(0.01, 2.0), 0.032489, 1e-6);
  EXPECT_EQ(noise_bound_edge(0.3, 1.0), noise_bound_global(0.3));
  EXPECT_NEAR(noise_bound_edge(0.3, 4.0), 0.5 * noise_bound_edge(0.3, 2.0), 1e-15);
  EXPECT_THROW(noise_bound_global(0.0), InputError);
  EXPECT_THROW(noise_bound_edge(0.1, 0.0), InputError);
}

TEST(NoiseBound, ConfidenceQuantiles) {
  EXPECT_EQ(chi2_quantile_3dof(), 21.11);
  // Tabulated chi-square quantiles with 3 degrees of freedom.
  EXPECT_NEAR(chi2_quantile_3dof(0.95), 7.8147, 1e-4);
  EXPECT_NEAR(chi2_quantile_3dof(0.99), 11.3449, 1e-4);
  EXPECT_THROW(chi2_quantile_3dof(1.0), InputError);
}

}  // namespace
}  // namespace simsync
