#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "simsync/assembly.hpp"
#include "simsync/ipm.hpp"
#include "simsync/types.hpp"
#include "simsync/view_graph.hpp"

namespace simsync {

inline constexpr double kDefaultEtaTol = 0.05;
inline constexpr double kExactEtaTol = 1e-6;
inline constexpr double kDegenerateScale = 1e-12;

class DegenerateScaleError : public NumericalError {
 public:
  explicit DegenerateScaleError(int frame)
      : NumericalError("rounded scale of frame " + std::to_string(frame) + " is degenerate (below 1e-12)"),
        frame_(frame) {}
  int frame() const { return frame_; }

 private:
  int frame_;
};

// Block 0 is the 3N x 3N Gram matrix; regularized problems append one 2x2
// block [[1, m_i], [m_i, u_i]] per frame i >= 2 with m_i = tr(X_ii)/3 - 1.
struct SdpProblem {
  ipm::ConicProgram program;
  int n_frames = 0;
  double lambda = 0.0;
  bool anchor_first = true;
};

struct SdpSolution {
  Mat X;
  std::vector<Mat> aux_blocks;
  Vec y;
  double f_star = 0.0;
  double dual_obj = 0.0;
  double gap = 0.0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  int iterations = 0;
  ipm::Status status = ipm::Status::optimal;
  std::string message;
};

struct SyncSolution {
  std::vector<SimilarityTransform> transforms;
  double f_star = 0.0;
  double rho_hat = 0.0;
  double eta = 0.0;
  double lambda = 0.0;
  bool certified = false;
  bool exact = false;
  bool det_positive = true;
  // Diagnostics of the underlying conic solve.
  std::string sdp_status = "optimal";
  int sdp_iterations = 0;
  double sdp_gap = 0.0;
  double solve_ms = 0.0;
};

namespace detail {

inline ipm::Constraint single(int block, int r, int c, double v, double rhs) {
  return ipm::Constraint{{ipm::Entry{block, r, c, v}}, rhs};
}

// Five rows forcing a 3x3 diagonal block at offset o to be a multiple of I.
inline void push_scaled_identity_rows(std::vector<ipm::Constraint>& out, int o) {
  out.push_back(single(0, o, o + 1, 0.5, 0.0));
  out.push_back(single(0, o, o + 2, 0.5, 0.0));
  out.push_back(single(0, o + 1, o + 2, 0.5, 0.0));
  out.push_back(ipm::Constraint{{{0, o, o, 1.0}, {0, o + 1, o + 1, -1.0}}, 0.0});
  out.push_back(ipm::Constraint{{{0, o + 1, o + 1, 1.0}, {0, o + 2, o + 2, -1.0}}, 0.0});
}

}  // namespace detail

// anchor_first = true pins X_11 = I_3 entrywise. Otherwise block 1 gets the
// same scaled-identity rows as the rest plus tr(X_11) = 3; both give 5(N-1)+6 rows.
inline SdpProblem build_sdp(const Mat& Q, bool anchor_first = true) {
  if (Q.rows() != Q.cols() || Q.rows() % 3 != 0 || Q.rows() == 0)
    throw InputError("cost matrix must be square with a positive multiple of 3 rows");
  if ((Q - Q.transpose()).norm() > 1e-9 * (1.0 + Q.norm())) throw InputError("cost matrix is not symmetric");
  SdpProblem p;
  p.n_frames = static_cast<int>(Q.rows() / 3);
  p.anchor_first = anchor_first;
  p.program.blocks = {static_cast<int>(Q.rows())};
  p.program.cost = {0.5 * (Q + Q.transpose())};
  auto& rows = p.program.constraints;
  rows.reserve(static_cast<std::size_t>(5 * (p.n_frames - 1) + 6));
  if (anchor_first) {
    for (int a = 0; a < 3; ++a) rows.push_back(detail::single(0, a, a, 1.0, 1.0));
    rows.push_back(detail::single(0, 0, 1, 0.5, 0.0));
    rows.push_back(detail::single(0, 0, 2, 0.5, 0.0));
    rows.push_back(detail::single(0, 1, 2, 0.5, 0.0));
  } else {
    detail::push_scaled_identity_rows(rows, 0);
    rows.push_back(ipm::Constraint{{{0, 0, 0, 1.0}, {0, 1, 1, 1.0}, {0, 2, 2, 1.0}}, 3.0});
  }
  for (int i = 1; i < p.n_frames; ++i) detail::push_scaled_identity_rows(rows, 3 * i);
  return p;
}

inline SdpProblem build_regularized_sdp(const Mat& Q, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("regularization weight must be >= 0");
  SdpProblem p = build_sdp(Q, true);
  if (lambda == 0.0) return p;
  p.lambda = lambda;
  for (int i = 1; i < p.n_frames; ++i) {
    const int blk = static_cast<int>(p.program.blocks.size());
    p.program.blocks.push_back(2);
    Mat c = Mat::Zero(2, 2);
    c(1, 1) = lambda;
    p.program.cost.push_back(c);
    p.program.constraints.push_back(detail::single(blk, 0, 0, 1.0, 1.0));
    // Z_01 - tr(X_ii)/3 = -1
    ipm::Constraint link;
    link.entries.push_back({blk, 0, 1, 0.5});
    for (int a = 0; a < 3; ++a) link.entries.push_back({0, 3 * i + a, 3 * i + a, -1.0 / 3.0});
    link.rhs = -1.0;
    p.program.constraints.push_back(std::move(link));
  }
  return p;
}

inline SdpSolution to_sdp_solution(ipm::Solution&& s) {
  SdpSolution out;
  if (!s.X.empty()) {
    out.X = std::move(s.X.front());
    for (std::size_t k = 1; k < s.X.size(); ++k) out.aux_blocks.push_back(std::move(s.X[k]));
  }
  out.y = std::move(s.y);
  out.f_star = s.primal_obj;
  out.dual_obj = s.dual_obj;
  out.gap = s.gap;
  out.primal_infeasibility = s.primal_infeasibility;
  out.dual_infeasibility = s.dual_infeasibility;
  out.iterations = s.iterations;
  out.status = s.status;
  out.message = std::move(s.message);
  return out;
}

inline SdpSolution solve_sdp(const SdpProblem& p, const ipm::ConicSolver& solver) {
  return to_sdp_solution(solver.solve(p.program));
}

inline SdpSolution solve_sdp(const SdpProblem& p, const ipm::IpmSettings& settings = {}) {
  return solve_sdp(p, ipm::InteriorPointSolver(settings));
}

// The six quadratic identities characterising nonnegative multiples of
// orthogonal matrices, evaluated on the columns of M.
inline std::array<double, 6> so3_scaled_residuals(const Mat3& m) {
  const Vec3 c1 = m.col(0), c2 = m.col(1), c3 = m.col(2);
  return {c1.dot(c1) - c2.dot(c2), c2.dot(c2) - c3.dot(c3), c3.dot(c3) - c1.dot(c1),
          c1.dot(c2),              c2.dot(c3),              c3.dot(c1)};
}

// Gram matrix R'R of a stack of scaled rotations.
inline Mat gram_from_transforms(const std::vector<SimilarityTransform>& xs) {
  const Mat r = stack_scaled_rotations(xs);
  return r.transpose() * r;
}

struct CertificateReport {
  bool certified = false;
  bool eta_ok = false;
  bool det_positive = false;
  bool exact = false;
  std::string message;
};

inline CertificateReport certify(const SyncSolution& s, double eta_tol = kDefaultEtaTol) {
  CertificateReport r;
  r.eta_ok = std::isfinite(s.eta) && s.eta <= eta_tol;
  r.det_positive = s.det_positive;
  r.certified = r.eta_ok && r.det_positive;
  r.exact = r.certified && s.eta <= kExactEtaTol;
  if (r.certified) {
    r.message = r.exact ? "certified (exact)" : "certified";
  } else if (!r.det_positive) {
    r.message = "not certified: a rounded block has nonpositive determinant";
  } else {
    r.message = "not certified: relative suboptimality above tolerance";
  }
  return r;
}

// Extracts SIM(3) elements from the Gram matrix via its top-3 eigenpairs.
// f_star is the conic optimum the rounded point is compared against; lambda
// adds the scale penalty to the rounded objective so both sides match.
inline SyncSolution round_solution(const Mat& X, double f_star, const ProblemMatrices& m, double lambda = 0.0,
                                   double eta_tol = kDefaultEtaTol) {
  const int n = m.n_frames;
  if (X.rows() != 3 * n || X.cols() != 3 * n) throw InputError("Gram matrix size does not match the problem");
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (X + X.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of the Gram matrix failed");
  // Eigenvalues ascend; take the last three.
  Mat U(3 * n, 3);
  for (int k = 0; k < 3; ++k) {
    const Eigen::Index idx = 3 * n - 1 - k;
    U.col(k) = std::sqrt(std::max(0.0, eig.eigenvalues()(idx))) * eig.eigenvectors().col(idx);
  }

  SyncSolution out;
  out.lambda = lambda;
  out.transforms.resize(static_cast<std::size_t>(n));
  const Mat3 b1 = U.topRows<3>();
  double penalty = 0.0;
  for (int i = 1; i < n; ++i) {
    const Mat3 mi = b1 * U.middleRows<3>(3 * i).transpose();
    const double s = mi.norm() / std::sqrt(3.0);
    if (!(s >= kDegenerateScale)) throw DegenerateScaleError(i);
    if (!(mi.determinant() > 0.0)) out.det_positive = false;
    auto& x = out.transforms[static_cast<std::size_t>(i)];
    x.s = s;
    x.R = project_to_so3(mi / s);
    penalty += (s * s - 1.0) * (s * s - 1.0);
  }
  const Mat r = stack_scaled_rotations(out.transforms);
  const Mat3X t = recover_translation_matrix(m, r);
  for (int i = 0; i < n; ++i) out.transforms[static_cast<std::size_t>(i)].t = t.col(i);

  out.f_star = f_star;
  out.rho_hat = evaluate_scaled_rotation_cost(m, r) + lambda * penalty;
  out.eta = (out.rho_hat - f_star) / (1.0 + std::abs(f_star) + std::abs(out.rho_hat));
  const auto cert = certify(out, eta_tol);
  out.certified = cert.certified;
  out.exact = cert.exact;
  return out;
}

// Objective bound used for certification: the dual objective when the dual
// iterate is feasible (weak duality then bounds every feasible X), otherwise
// the primal objective.
inline double lower_bound(const SdpSolution& sdp) {
  if (std::isfinite(sdp.dual_obj) && sdp.dual_infeasibility <= 1e-7 && sdp.y.size() > 0) return sdp.dual_obj;
  return sdp.f_star;
}

inline SyncSolution round_solution(const SdpSolution& sdp, const ProblemMatrices& m, double lambda = 0.0,
                                   double eta_tol = kDefaultEtaTol) {
  SyncSolution out = round_solution(sdp.X, lower_bound(sdp), m, lambda, eta_tol);
  out.sdp_status = ipm::to_string(sdp.status);
  out.sdp_iterations = sdp.iterations;
  out.sdp_gap = sdp.gap;
  return out;
}

// Local Gauss-Newton polish of rounded transforms on
//   tr(Q R'R) + lambda sum_{i>=2} (s_i^2 - 1)^2,
// with block i perturbed as s_i R_i (a_i I + hat(w_i)) and retracted by
// s_i <- s_i exp(a_i), R_i <- R_i exp(hat(w_i)). Frame 0 stays fixed.
// Steps are accepted only if the objective decreases, so the result is never
// worse than the input. Translations, rho_hat and eta are recomputed.
inline void refine_solution(SyncSolution& sol, const ProblemMatrices& m, int max_iters = 20,
                            double eta_tol = kDefaultEtaTol) {
  const int n = m.n_frames;
  if (n < 2 || static_cast<int>(sol.transforms.size()) != n) return;
  const double lambda = sol.lambda;
  auto objective = [&](const std::vector<SimilarityTransform>& xs) {
    double pen = 0.0;
    for (int i = 1; i < n; ++i) {
      const double s2 = xs[static_cast<std::size_t>(i)].s * xs[static_cast<std::size_t>(i)].s;
      pen += (s2 - 1.0) * (s2 - 1.0);
    }
    return evaluate_scaled_rotation_cost(m, stack_scaled_rotations(xs)) + lambda * pen;
  };
  const int np = 4 * (n - 1);
  std::vector<SimilarityTransform> xs = sol.transforms;
  double f = objective(xs);
  for (int it = 0; it < max_iters; ++it) {
    const Mat r = stack_scaled_rotations(xs);
    const Mat mq = r * m.Q;  // 3 x 3N
    // Perturbation generators P_p (3x3) of each parameter, p = 4(i-1) + k.
    std::vector<Mat3> gen(static_cast<std::size_t>(np));
    for (int i = 1; i < n; ++i) {
      const auto& x = xs[static_cast<std::size_t>(i)];
      const Mat3 sr = x.s * x.R;
      gen[static_cast<std::size_t>(4 * (i - 1))] = sr;
      for (int k = 0; k < 3; ++k) gen[static_cast<std::size_t>(4 * (i - 1) + 1 + k)] = sr * hat(Vec3::Unit(k));
    }
    Vec g(np);
    Mat h = Mat::Zero(np, np);
    for (int p = 0; p < np; ++p) {
      const int ip = 1 + p / 4;
      g(p) = 2.0 * mq.block<3, 3>(0, 3 * ip).cwiseProduct(gen[static_cast<std::size_t>(p)]).sum();
      for (int q = p; q < np; ++q) {
        const int iq = 1 + q / 4;
        const Mat3 ptq = gen[static_cast<std::size_t>(p)].transpose() * gen[static_cast<std::size_t>(q)];
        h(p, q) = h(q, p) = 2.0 * m.Q.block<3, 3>(3 * ip, 3 * iq).cwiseProduct(ptq).sum();
      }
    }
    if (lambda > 0.0) {
      for (int i = 1; i < n; ++i) {
        const double s2 = xs[static_cast<std::size_t>(i)].s * xs[static_cast<std::size_t>(i)].s;
        const int p = 4 * (i - 1);
        g(p) += 4.0 * lambda * s2 * (s2 - 1.0);
        h(p, p) += 8.0 * lambda * s2 * s2;
      }
    }
    h.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    const Vec step = -h.ldlt().solve(g);
    if (!step.allFinite()) break;
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 10; ++ls, alpha *= 0.5) {
      std::vector<SimilarityTransform> trial = xs;
      for (int i = 1; i < n; ++i) {
        auto& x = trial[static_cast<std::size_t>(i)];
        const auto seg = step.segment<4>(4 * (i - 1)) * alpha;
        x.s *= std::exp(seg(0));
        x.R = project_to_so3(x.R * so3_exp(seg.tail<3>()));
      }
      const double ft = objective(trial);
      if (ft < f) {
        const double drop = f - ft;
        xs = std::move(trial);
        f = ft;
        accepted = drop > 1e-15 * (1.0 + std::abs(f));
        break;
      }
    }
    if (!accepted) break;
  }
  const Mat3X t = recover_translation_matrix(m, stack_scaled_rotations(xs));
  for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)].t = t.col(i);
  sol.transforms = std::move(xs);
  sol.rho_hat = f;
  sol.eta = (sol.rho_hat - sol.f_star) / (1.0 + std::abs(sol.f_star) + std::abs(sol.rho_hat));
  const auto cert = certify(sol, eta_tol);
  sol.certified = cert.certified;
  sol.exact = cert.exact;
}

struct SyncOptions {
  double lambda = 0.0;
  double eta_tol = kDefaultEtaTol;
  // Polish the rounded estimate locally before reporting rho_hat.
  bool refine = true;
  ipm::IpmSettings ipm;
  // Replaces the built-in interior-point solver when set.
  std::shared_ptr<const ipm::ConicSolver> solver;
};

// Full pipeline: validate, assemble, relax, solve, round, certify.
inline SyncSolution solve_sync(const ViewGraph& g, const SyncOptions& opt = {}) {
  require_valid(g);
  const auto start = std::chrono::steady_clock::now();
  const ProblemMatrices m = assemble(g);
  const SdpProblem p = opt.lambda > 0.0 ? build_regularized_sdp(m.Q, opt.lambda) : build_sdp(m.Q, true);
  const SdpSolution sdp =
      opt.solver ? solve_sdp(p, *opt.solver) : solve_sdp(p, ipm::InteriorPointSolver(opt.ipm));
  if (sdp.status == ipm::Status::failed || sdp.status == ipm::Status::infeasible || sdp.X.size() == 0)
    throw NumericalError(std::string("conic solver ") + ipm::to_string(sdp.status) + ": " + sdp.message);
  SyncSolution out = round_solution(sdp, m, p.lambda, opt.eta_tol);
  if (opt.refine) refine_solution(out, m, 20, opt.eta_tol);
  out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace simsync
