#pragma once

#include <vector>

#include "simsync/types.hpp"
#include "simsync/view_graph.hpp"

namespace simsync {

// Cost matrices of the flattened problem. With R = [s_1 R_1, ..., s_N R_N]
// (3 x 3N) and T = [t_1, ..., t_N] (3 x N) the objective is
//   tr(T Q1 T') + 2 tr(R V T') + tr(R Q2 R'),
// and after eliminating translations (t_1 = 0) it becomes tr(R Q R').
struct ProblemMatrices {
  int n_frames = 0;
  Mat Q1;  // N x N
  Mat Q2;  // 3N x 3N
  Mat V;   // 3N x N
  Mat A;   // N x 3N, T' = A R'
  Mat Q;   // 3N x 3N
};

// Q1, Q2, V only. Works on any graph, including disconnected ones.
inline void accumulate_costs(const ViewGraph& g, ProblemMatrices& m) {
  const int n = g.num_frames();
  m.n_frames = n;
  m.Q1 = Mat::Zero(n, n);
  m.Q2 = Mat::Zero(3 * n, 3 * n);
  m.V = Mat::Zero(3 * n, n);
  for (const auto& e : g.edges) {
    const auto c = edge_clouds(g, e);
    const double wsum = c.w.sum();
    const int i = e.i, j = e.j;
    m.Q1(i, i) += wsum;
    m.Q1(j, j) += wsum;
    m.Q1(i, j) -= wsum;
    m.Q1(j, i) -= wsum;

    const Mat3X wpi = c.pi * c.w.asDiagonal();
    const Mat3X wpj = c.pj * c.w.asDiagonal();
    const Mat3 ii = wpi * c.pi.transpose();
    const Mat3 jj = wpj * c.pj.transpose();
    const Mat3 ij = wpi * c.pj.transpose();
    m.Q2.block<3, 3>(3 * i, 3 * i) += ii;
    m.Q2.block<3, 3>(3 * j, 3 * j) += jj;
    m.Q2.block<3, 3>(3 * i, 3 * j) -= ij;
    m.Q2.block<3, 3>(3 * j, 3 * i) -= ij.transpose();

    const Vec3 si = wpi.rowwise().sum();
    const Vec3 sj = wpj.rowwise().sum();
    m.V.block<3, 1>(3 * i, i) += si;
    m.V.block<3, 1>(3 * i, j) -= si;
    m.V.block<3, 1>(3 * j, i) -= sj;
    m.V.block<3, 1>(3 * j, j) += sj;
  }
}

inline ProblemMatrices assemble(const ViewGraph& g) {
  if (g.num_frames() == 0) throw InputError("assembly: graph has no frames");
  const auto rep = validate(g);
  if (!rep.out_of_range.empty() || !rep.self_loops.empty() || !rep.bad_weights.empty())
    throw InputError("assembly: invalid view graph: " + rep.summary());
  if (!rep.effectively_connected)
    throw InputError("assembly: reduced normal matrix is singular; graph has " +
                     std::to_string(rep.effective_components) + " components over positive-weight edges");

  ProblemMatrices m;
  accumulate_costs(g, m);
  const int n = m.n_frames;
  m.A = Mat::Zero(n, 3 * n);
  if (n > 1) {
    // Q1 T' = -V' R' is consistent because Q1 1 = 0 and V 1 = 0; with t_1 = 0
    // the remaining rows reduce to the grounded Laplacian system.
    const Mat grounded = m.Q1.bottomRightCorner(n - 1, n - 1);
    Eigen::LDLT<Mat> ldlt(grounded);
    const double scale = grounded.diagonal().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-13 * scale))
      throw InputError("assembly: reduced normal matrix is singular");
    m.A.bottomRows(n - 1) = -ldlt.solve(m.V.rightCols(n - 1).transpose().eval());
  }
  m.Q = m.A.transpose() * m.Q1 * m.A + m.V * m.A + m.A.transpose() * m.V.transpose() + m.Q2;
  m.Q = 0.5 * (m.Q + m.Q.transpose()).eval();
  return m;
}

// 3 x 3N horizontal stack of s_i R_i.
inline Mat stack_scaled_rotations(const std::vector<SimilarityTransform>& xs) {
  Mat r(3, 3 * static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) r.block<3, 3>(0, 3 * static_cast<Eigen::Index>(i)) = xs[i].s * xs[i].R;
  return r;
}

// Optimal translations for fixed scaled rotations, as a 3 x N matrix (t_1 = 0).
inline Mat3X recover_translation_matrix(const ProblemMatrices& m, const Mat& r_stacked) {
  if (r_stacked.rows() != 3 || r_stacked.cols() != 3 * m.n_frames)
    throw InputError("scaled rotation stack has the wrong shape");
  Mat3X t = r_stacked * m.A.transpose();
  t.col(0).setZero();
  return t;
}

// Same, flattened as [t_1; t_2; ...; t_N].
inline Vec recover_translations(const ProblemMatrices& m, const Mat& r_stacked) {
  const Mat3X t = recover_translation_matrix(m, r_stacked);
  return Eigen::Map<const Vec>(t.data(), t.size());
}

inline double evaluate_scaled_rotation_cost(const ProblemMatrices& m, const Mat& r_stacked) {
  if (r_stacked.rows() != 3 || r_stacked.cols() != 3 * m.n_frames)
    throw InputError("scaled rotation stack has the wrong shape");
  return (r_stacked * m.Q * r_stacked.transpose()).trace();
}

// Direct weighted sum of squared point residuals.
inline double evaluate_objective(const ViewGraph& g, const std::vector<SimilarityTransform>& xs) {
  if (static_cast<int>(xs.size()) != g.num_frames()) throw InputError("need one transform per frame");
  double total = 0.0;
  for (const auto& e : g.edges) {
    const auto& xi = xs[static_cast<std::size_t>(e.i)];
    const auto& xj = xs[static_cast<std::size_t>(e.j)];
    const auto& fi = g.frames[static_cast<std::size_t>(e.i)].points;
    const auto& fj = g.frames[static_cast<std::size_t>(e.j)].points;
    for (const auto& c : e.matches) {
      const Vec3 r = xi.apply(fi[static_cast<std::size_t>(c.ki)]) - xj.apply(fj[static_cast<std::size_t>(c.kj)]);
      total += c.w * r.squaredNorm();
    }
  }
  return total;
}

}  // namespace simsync
