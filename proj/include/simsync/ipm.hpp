#pragma once

// Dense primal-dual interior-point method for semidefinite programs of the form
//
//   minimize    sum_b <C_b, X_b>
//   subject to  sum_b <A_ib, X_b> = b_i,  i = 1..m
//               X_b  PSD for every block b
//
// with dual  maximize b'y  s.t.  sum_i y_i A_i + S = C,  S PSD.
//
// Search directions use Nesterov-Todd scaling with a Mehrotra
// predictor-corrector, infeasible start, and a dense Schur complement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <tuple>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "simsync/types.hpp"

namespace simsync::ipm {

// One nonzero of a symmetric coefficient matrix. For row != col the value is
// placed at both (row, col) and (col, row).
struct Entry {
  int block = 0;
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct Constraint {
  std::vector<Entry> entries;
  double rhs = 0.0;
};

struct ConicProgram {
  std::vector<int> blocks;
  std::vector<Mat> cost;
  std::vector<Constraint> constraints;

  int num_constraints() const { return static_cast<int>(constraints.size()); }

  int total_dim() const { return std::accumulate(blocks.begin(), blocks.end(), 0); }

  void validate() const {
    if (blocks.empty()) throw InputError("conic program has no blocks");
    if (cost.size() != blocks.size()) throw InputError("cost/block count mismatch");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (blocks[b] <= 0) throw InputError("block dimension must be positive");
      if (cost[b].rows() != blocks[b] || cost[b].cols() != blocks[b])
        throw InputError("cost block has wrong shape");
      if ((cost[b] - cost[b].transpose()).norm() > 1e-9 * (1.0 + cost[b].norm()))
        throw InputError("cost block is not symmetric");
    }
    if (constraints.empty()) throw InputError("conic program needs at least one constraint");
    for (const auto& c : constraints) {
      for (const auto& e : c.entries) {
        if (e.block < 0 || e.block >= static_cast<int>(blocks.size()))
          throw InputError("constraint entry references a missing block");
        const int n = blocks[e.block];
        if (e.row < 0 || e.col < 0 || e.row >= n || e.col >= n)
          throw InputError("constraint entry out of block range");
        if (!std::isfinite(e.value)) throw InputError("constraint entry is not finite");
      }
      if (!std::isfinite(c.rhs)) throw InputError("constraint rhs is not finite");
    }
  }
};

struct IpmSettings {
  double gap_tol = 1e-9;
  double feas_tol = 1e-9;
  int max_iters = 200;
  double step_fraction = 0.98;
  bool verbose = false;
};

enum class Status { optimal, inaccurate, infeasible, failed };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::inaccurate: return "inaccurate";
    case Status::infeasible: return "infeasible";
    case Status::failed: return "failed";
  }
  return "unknown";
}

struct Solution {
  std::vector<Mat> X;
  std::vector<Mat> S;
  Vec y;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double gap = 0.0;  // |pobj - dobj| / (1 + |pobj| + |dobj|)
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  int iterations = 0;
  Status status = Status::failed;
  std::string message;
};

// ---------------------------------------------------------------------------
// Operators on block-diagonal symmetric matrices.

using Blocks = std::vector<Mat>;

inline double entry_inner(const Entry& e, const Mat& x) {
  return e.row == e.col ? e.value * x(e.row, e.col) : e.value * (x(e.row, e.col) + x(e.col, e.row));
}

// <A_i, X>
inline double apply_constraint(const Constraint& c, const Blocks& x) {
  double s = 0.0;
  for (const auto& e : c.entries) s += entry_inner(e, x[e.block]);
  return s;
}

inline Vec apply_operator(const std::vector<Constraint>& cons, const Blocks& x) {
  Vec out(static_cast<Eigen::Index>(cons.size()));
  for (std::size_t i = 0; i < cons.size(); ++i) out(static_cast<Eigen::Index>(i)) = apply_constraint(cons[i], x);
  return out;
}

// out += sum_i y_i A_i
inline void add_adjoint(const std::vector<Constraint>& cons, const Vec& y, Blocks& out) {
  for (std::size_t i = 0; i < cons.size(); ++i) {
    const double yi = y(static_cast<Eigen::Index>(i));
    if (yi == 0.0) continue;
    for (const auto& e : cons[i].entries) {
      out[e.block](e.row, e.col) += yi * e.value;
      if (e.row != e.col) out[e.block](e.col, e.row) += yi * e.value;
    }
  }
}

inline double inner(const Blocks& a, const Blocks& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k]).sum();
  return s;
}

inline double frobenius(const Blocks& a) { return std::sqrt(inner(a, a)); }

inline Blocks zeros_like(const std::vector<int>& dims) {
  Blocks out;
  out.reserve(dims.size());
  for (int n : dims) out.push_back(Mat::Zero(n, n));
  return out;
}

inline void symmetrize(Mat& m) { m = 0.5 * (m + m.transpose()).eval(); }

// Minimum eigenvalue of each block; returns the smallest over all blocks.
inline double min_eigenvalue(const Blocks& x) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& b : x) {
    Eigen::SelfAdjointEigenSolver<Mat> es(b, Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues()(0));
  }
  return lo;
}

// ---------------------------------------------------------------------------
// Presolve: merge duplicate entries, detect dependent equality rows.

struct PresolveReport {
  int original_constraints = 0;
  std::vector<int> kept;     // original indices of surviving rows, in order
  std::vector<int> removed;  // original indices of redundant rows
  bool infeasible = false;
  std::string message;
};

struct PresolveResult {
  ConicProgram program;
  PresolveReport report;
};

namespace detail {

using EntryKey = std::tuple<int, int, int>;

inline Constraint canonicalize(const Constraint& c) {
  std::map<EntryKey, double> acc;
  for (const auto& e : c.entries) {
    const int r = std::min(e.row, e.col), q = std::max(e.row, e.col);
    acc[{e.block, r, q}] += e.value;
  }
  Constraint out;
  out.rhs = c.rhs;
  for (const auto& [k, v] : acc) {
    if (v == 0.0) continue;
    out.entries.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), v});
  }
  return out;
}

// Frobenius inner product of two canonical coefficient matrices.
inline double coefficient_inner(const Constraint& a, const Constraint& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  auto key = [](const Entry& e) { return EntryKey{e.block, e.row, e.col}; };
  while (i < a.entries.size() && j < b.entries.size()) {
    const auto ka = key(a.entries[i]), kb = key(b.entries[j]);
    if (ka < kb) {
      ++i;
    } else if (kb < ka) {
      ++j;
    } else {
      const double w = a.entries[i].row == a.entries[i].col ? 1.0 : 2.0;
      s += w * a.entries[i].value * b.entries[j].value;
      ++i;
      ++j;
    }
  }
  return s;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace detail

// Removes duplicate and linearly dependent equality rows. Rows are examined in
// their original order within each group of rows sharing matrix entries; a row
// is dropped when it lies in the span of the rows already accepted.
inline PresolveResult presolve(const ConicProgram& program, double tol = 1e-10) {
  program.validate();
  PresolveResult res;
  res.program.blocks = program.blocks;
  res.program.cost = program.cost;
  res.report.original_constraints = program.num_constraints();

  const int m = program.num_constraints();
  std::vector<Constraint> canon;
  canon.reserve(static_cast<std::size_t>(m));
  for (const auto& c : program.constraints) canon.push_back(detail::canonicalize(c));

  // Group rows that touch a common entry; dependence can only occur within a group.
  detail::UnionFind uf(m);
  std::map<detail::EntryKey, int> owner;
  for (int i = 0; i < m; ++i) {
    for (const auto& e : canon[static_cast<std::size_t>(i)].entries) {
      auto [it, inserted] = owner.try_emplace({e.block, e.row, e.col}, i);
      if (!inserted) uf.unite(i, it->second);
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < m; ++i) groups[uf.find(i)].push_back(i);

  std::vector<char> keep(static_cast<std::size_t>(m), 0);
  for (const auto& [root, rows] : groups) {
    std::vector<int> accepted;
    Mat chol;  // lower Cholesky factor of the accepted rows' Gram matrix
    for (int i : rows) {
      const auto& ci = canon[static_cast<std::size_t>(i)];
      const double gii = detail::coefficient_inner(ci, ci);
      if (ci.entries.empty() || gii == 0.0) {
        if (std::abs(ci.rhs) > tol) {
          res.report.infeasible = true;
          res.report.message = "constraint " + std::to_string(i) + " reads 0 = " + std::to_string(ci.rhs);
          return res;
        }
        res.report.removed.push_back(i);
        continue;
      }
      const int k = static_cast<int>(accepted.size());
      Vec g(k);
      for (int a = 0; a < k; ++a)
        g(a) = detail::coefficient_inner(canon[static_cast<std::size_t>(accepted[static_cast<std::size_t>(a)])], ci);
      Vec l = k > 0 ? Vec(chol.topLeftCorner(k, k).triangularView<Eigen::Lower>().solve(g)) : Vec(0);
      const double d = gii - l.squaredNorm();
      if (d <= tol * gii) {
        // Dependent: check consistency of the right-hand side.
        Vec coef = chol.topLeftCorner(k, k).transpose().triangularView<Eigen::Upper>().solve(l);
        double predicted = 0.0;
        double bnorm = 0.0;
        for (int a = 0; a < k; ++a) {
          const double ba = canon[static_cast<std::size_t>(accepted[static_cast<std::size_t>(a)])].rhs;
          predicted += coef(a) * ba;
          bnorm += std::abs(coef(a) * ba);
        }
        if (std::abs(predicted - ci.rhs) > 1e-9 * (1.0 + std::abs(ci.rhs) + bnorm)) {
          res.report.infeasible = true;
          res.report.message = "constraint " + std::to_string(i) + " is inconsistent with earlier rows";
          return res;
        }
        res.report.removed.push_back(i);
        continue;
      }
      Mat grown = Mat::Zero(k + 1, k + 1);
      if (k > 0) grown.topLeftCorner(k, k) = chol.topLeftCorner(k, k);
      if (k > 0) grown.block(k, 0, 1, k) = l.transpose();
      grown(k, k) = std::sqrt(d);
      chol = std::move(grown);
      accepted.push_back(i);
      keep[static_cast<std::size_t>(i)] = 1;
    }
  }
  for (int i = 0; i < m; ++i) {
    if (keep[static_cast<std::size_t>(i)]) {
      res.report.kept.push_back(i);
      res.program.constraints.push_back(canon[static_cast<std::size_t>(i)]);
    }
  }
  std::sort(res.report.removed.begin(), res.report.removed.end());
  std::ostringstream os;
  os << "kept " << res.report.kept.size() << " of " << m << " constraints";
  res.report.message = os.str();
  return res;
}

// ---------------------------------------------------------------------------
// Solver.

namespace detail {

// Per-block Nesterov-Todd scaling: W = G G', with G^{-1} X G^{-T} = G' S G = diag(v).
struct NtScaling {
  Mat G;
  Mat W;
  Vec v;
};

inline NtScaling nt_scaling(const Mat& x, const Mat& s) {
  const Eigen::Index n = x.rows();
  Mat factor;
  Eigen::LLT<Mat> llt(x);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es(x);
    factor = es.eigenvectors() * es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().asDiagonal();
  }
  Mat inner_mat = factor.transpose() * (s * factor);
  symmetrize(inner_mat);
  Eigen::SelfAdjointEigenSolver<Mat> es(inner_mat);
  NtScaling out;
  out.v = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
  out.G = factor * es.eigenvectors() * out.v.cwiseInverse().cwiseSqrt().asDiagonal();
  out.W.noalias() = out.G * out.G.transpose();
  symmetrize(out.W);
  (void)n;
  return out;
}

// Largest alpha in (0, inf] with diag(v) + alpha * D PSD.
inline double max_step(const Vec& v, const Mat& d) {
  const Vec isq = v.cwiseInverse().cwiseSqrt();
  Mat scaled = isq.asDiagonal() * d * isq.asDiagonal();
  symmetrize(scaled);
  double lo;
  if (scaled.rows() == 1) {
    lo = scaled(0, 0);
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es(scaled, Eigen::EigenvaluesOnly);
    lo = es.eigenvalues()(0);
  }
  if (!std::isfinite(lo)) return 0.0;
  return lo < 0.0 ? -1.0 / lo : std::numeric_limits<double>::infinity();
}

// Constraint entries expanded to full (p, q) positions, grouped for Schur assembly.
struct FullEntry {
  int block;
  int p;
  int q;
  double a;
};

inline std::vector<std::vector<FullEntry>> expand(const std::vector<Constraint>& cons) {
  std::vector<std::vector<FullEntry>> out(cons.size());
  for (std::size_t i = 0; i < cons.size(); ++i) {
    for (const auto& e : cons[i].entries) {
      out[i].push_back({e.block, e.row, e.col, e.value});
      if (e.row != e.col) out[i].push_back({e.block, e.col, e.row, e.value});
    }
  }
  return out;
}

// M_ij = <A_i, W A_j W> = sum a_pq c_rs W_pr W_sq
inline Mat schur_complement(const std::vector<std::vector<FullEntry>>& full, const std::vector<NtScaling>& nt) {
  const Eigen::Index m = static_cast<Eigen::Index>(full.size());
  Mat M(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& ai = full[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i; j < m; ++j) {
      const auto& aj = full[static_cast<std::size_t>(j)];
      double s = 0.0;
      for (const auto& e : ai) {
        const Mat& w = nt[static_cast<std::size_t>(e.block)].W;
        for (const auto& f : aj) {
          if (f.block != e.block) continue;
          s += e.a * f.a * w(e.p, f.p) * w(f.q, e.q);
        }
      }
      M(i, j) = s;
      M(j, i) = s;
    }
  }
  return M;
}

// <A_i, L R'> for each constraint, where L, R are per-block dense factors
// (used to evaluate A(G T G') without forming the product).
inline Vec apply_factored(const std::vector<Constraint>& cons, const Blocks& left, const Blocks& right) {
  Vec out(static_cast<Eigen::Index>(cons.size()));
  for (std::size_t i = 0; i < cons.size(); ++i) {
    double s = 0.0;
    for (const auto& e : cons[i].entries) {
      const Mat& l = left[static_cast<std::size_t>(e.block)];
      const Mat& r = right[static_cast<std::size_t>(e.block)];
      const double xrc = l.row(e.row).dot(r.row(e.col));
      if (e.row == e.col) {
        s += e.value * xrc;
      } else {
        s += e.value * (xrc + l.row(e.col).dot(r.row(e.row)));
      }
    }
    out(static_cast<Eigen::Index>(i)) = s;
  }
  return out;
}

}  // namespace detail

// Abstract solver seam so an external conic solver can replace the built-in one.
class ConicSolver {
 public:
  virtual ~ConicSolver() = default;
  virtual Solution solve(const ConicProgram& program) const = 0;
};

class InteriorPointSolver : public ConicSolver {
 public:
  InteriorPointSolver() = default;
  explicit InteriorPointSolver(IpmSettings settings) : settings_(settings) {}

  const IpmSettings& settings() const { return settings_; }

  Solution solve(const ConicProgram& program) const override;

 private:
  Solution solve_reduced(const ConicProgram& program) const;

  IpmSettings settings_;
};

inline Solution solve(const ConicProgram& program, const IpmSettings& settings = {}) {
  return InteriorPointSolver(settings).solve(program);
}

inline Solution InteriorPointSolver::solve(const ConicProgram& program) const {
  if (settings_.gap_tol <= 0.0 || settings_.feas_tol <= 0.0 || settings_.max_iters <= 0 ||
      settings_.step_fraction <= 0.0 || settings_.step_fraction >= 1.0)
    throw InputError("invalid interior-point settings");
  auto pre = presolve(program);
  if (pre.report.infeasible) {
    Solution sol;
    sol.status = Status::infeasible;
    sol.message = pre.report.message;
    sol.y = Vec::Zero(program.num_constraints());
    return sol;
  }
  Solution sol = solve_reduced(pre.program);
  // Scatter duals back to the original row numbering; removed rows get 0.
  Vec y = Vec::Zero(program.num_constraints());
  for (std::size_t k = 0; k < pre.report.kept.size(); ++k)
    y(pre.report.kept[k]) = sol.y(static_cast<Eigen::Index>(k));
  sol.y = std::move(y);
  if (!pre.report.removed.empty()) sol.message += " (presolve: " + pre.report.message + ")";
  return sol;
}

inline Solution InteriorPointSolver::solve_reduced(const ConicProgram& original) const {
  const auto& opt = settings_;
  const std::vector<int>& dims = original.blocks;
  const int nblocks = static_cast<int>(dims.size());
  const int m = original.num_constraints();
  const int ntot = original.total_dim();

  // Row and data scaling.
  std::vector<Constraint> cons = original.constraints;
  Vec row_norm(m);
  Vec b(m);
  for (int i = 0; i < m; ++i) {
    auto& c = cons[static_cast<std::size_t>(i)];
    const double nrm = std::sqrt(detail::coefficient_inner(c, c));
    row_norm(i) = nrm;
    for (auto& e : c.entries) e.value /= nrm;
    b(i) = c.rhs / nrm;
  }
  const double b_scale = std::max(1.0, b.norm());
  double c_norm = 0.0;
  for (const auto& cb : original.cost) c_norm += cb.squaredNorm();
  const double c_scale = std::max(1.0, std::sqrt(c_norm));
  b /= b_scale;
  Blocks C;
  for (const auto& cb : original.cost) C.push_back(cb / c_scale);

  Vec b_orig(m);
  for (int i = 0; i < m; ++i) b_orig(i) = original.constraints[static_cast<std::size_t>(i)].rhs;
  const double b_orig_norm = b_orig.norm();
  const double c_orig_norm = std::sqrt(c_norm);

  const auto full = detail::expand(cons);

  // Gram matrix of the (scaled) constraint rows, used to pull iterates back
  // onto {A(X) = b} when roundoff in late iterations drifts them off it.
  Mat gram = Mat::Zero(m, m);
  {
    std::map<detail::EntryKey, std::vector<std::pair<int, double>>> touching;
    for (int i = 0; i < m; ++i)
      for (const auto& e : cons[static_cast<std::size_t>(i)].entries)
        touching[{e.block, std::min(e.row, e.col), std::max(e.row, e.col)}].emplace_back(i, e.value);
    for (const auto& [key, rows] : touching) {
      const double w = std::get<1>(key) == std::get<2>(key) ? 1.0 : 2.0;
      for (const auto& [i, ai] : rows)
        for (const auto& [j, aj] : rows) gram(i, j) += w * ai * aj;
    }
  }
  const Eigen::LLT<Mat> gram_llt(gram);
  const bool can_project = gram_llt.info() == Eigen::Success;
  auto project_primal = [&](Blocks& x) {
    if (!can_project) return;
    const Vec z = gram_llt.solve(Vec(b - apply_operator(cons, x)));
    Blocks trial = x;
    add_adjoint(cons, z, trial);
    for (auto& t : trial) {
      symmetrize(t);
      if (Eigen::LLT<Mat>(t).info() != Eigen::Success) return;
    }
    x = std::move(trial);
  };

  // Initial point.
  Blocks X, S;
  double max_rel_b = 0.0;
  for (int i = 0; i < m; ++i) max_rel_b = std::max(max_rel_b, (1.0 + std::abs(b(i))) / 2.0);
  for (int k = 0; k < nblocks; ++k) {
    const double n = dims[static_cast<std::size_t>(k)];
    const double zeta = std::max({10.0, std::sqrt(n), n * max_rel_b});
    const double eta = std::max({10.0, std::sqrt(n), C[static_cast<std::size_t>(k)].norm()});
    X.push_back(zeta * Mat::Identity(dims[static_cast<std::size_t>(k)], dims[static_cast<std::size_t>(k)]));
    S.push_back(eta * Mat::Identity(dims[static_cast<std::size_t>(k)], dims[static_cast<std::size_t>(k)]));
  }
  Vec y = Vec::Zero(m);

  struct Metrics {
    double pobj, dobj, gap, pinf, dinf;
    double worst() const { return std::max({gap, pinf, dinf}); }
  };
  auto metrics = [&](const Blocks& x, const Vec& yy, const Blocks& s) {
    // Evaluate on the unscaled problem.
    Metrics mt;
    const double pobj = inner(C, x) * c_scale * b_scale;
    const double dobj = b.dot(yy) * c_scale * b_scale;
    Vec rp = b - apply_operator(cons, x);
    for (int i = 0; i < m; ++i) rp(i) *= row_norm(i) * b_scale;
    Blocks rd = C;
    for (int k = 0; k < nblocks; ++k) rd[static_cast<std::size_t>(k)] -= s[static_cast<std::size_t>(k)];
    Vec neg = -yy;
    add_adjoint(cons, neg, rd);
    mt.pobj = pobj;
    mt.dobj = dobj;
    mt.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    mt.pinf = rp.norm() / (1.0 + b_orig_norm);
    mt.dinf = frobenius(rd) * c_scale / (1.0 + c_orig_norm);
    return mt;
  };

  auto finish = [&](const Blocks& x, const Vec& yy, const Blocks& s, int iters, Status st, std::string msg) {
    Solution sol;
    const Metrics mt = metrics(x, yy, s);
    for (int k = 0; k < nblocks; ++k) {
      sol.X.push_back(x[static_cast<std::size_t>(k)] * b_scale);
      sol.S.push_back(s[static_cast<std::size_t>(k)] * c_scale);
    }
    sol.y = Vec(m);
    for (int i = 0; i < m; ++i) sol.y(i) = yy(i) * c_scale / row_norm(i);
    sol.primal_obj = mt.pobj;
    sol.dual_obj = mt.dobj;
    sol.gap = mt.gap;
    sol.primal_infeasibility = mt.pinf;
    sol.dual_infeasibility = mt.dinf;
    sol.iterations = iters;
    sol.status = st;
    sol.message = std::move(msg);
    return sol;
  };

  Blocks best_X = X, best_S = S;
  Vec best_y = y;
  Metrics best = metrics(X, y, S);
  int best_iter = 0;
  // Returns the best iterate seen, accepted as inaccurate when it is close
  // to the requested tolerances.
  auto fallback = [&](std::string msg) {
    const Status st = best.worst() < 1e3 * std::max(opt.gap_tol, opt.feas_tol) ? Status::inaccurate : Status::failed;
    return finish(best_X, best_y, best_S, best_iter, st, std::move(msg));
  };

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    const Metrics mt = metrics(X, y, S);
    if (mt.worst() < best.worst()) {
      best = mt;
      best_X = X;
      best_S = S;
      best_y = y;
      best_iter = iter;
    }
    if (opt.verbose) {
      std::ostringstream os;
      os << std::scientific << std::setprecision(3) << "iter " << iter << " pobj " << mt.pobj << " dobj " << mt.dobj
         << " gap " << mt.gap << " pinf " << mt.pinf << " dinf " << mt.dinf;
      std::fprintf(stderr, "%s\n", os.str().c_str());
    }
    if (mt.gap <= opt.gap_tol && mt.pinf <= opt.feas_tol && mt.dinf <= opt.feas_tol)
      return finish(X, y, S, iter, Status::optimal, "converged");
    // Late iterations on degenerate problems can trade feasibility for gap
    // without net progress; give up after a few non-improving steps.
    if (iter - best_iter >= 5) return fallback("no progress in the last 5 iterations");

    // Residuals in scaled space.
    const Vec rp = b - apply_operator(cons, X);
    Blocks Rd = C;
    for (int k = 0; k < nblocks; ++k) Rd[static_cast<std::size_t>(k)] -= S[static_cast<std::size_t>(k)];
    add_adjoint(cons, Vec(-y), Rd);
    const double mu = inner(X, S) / ntot;
    if (!std::isfinite(mu) || mu <= 0.0) return fallback("complementarity became invalid");

    std::vector<detail::NtScaling> nt;
    nt.reserve(static_cast<std::size_t>(nblocks));
    for (int k = 0; k < nblocks; ++k) nt.push_back(detail::nt_scaling(X[static_cast<std::size_t>(k)], S[static_cast<std::size_t>(k)]));

    Mat M = detail::schur_complement(full, nt);
    Eigen::LLT<Mat> schur(M);
    if (schur.info() != Eigen::Success) {
      const double reg = 1e-14 * std::max(1.0, M.diagonal().maxCoeff());
      M.diagonal().array() += reg;
      schur.compute(M);
      if (schur.info() != Eigen::Success) return fallback("Schur complement factorization failed");
    }

    // A(W Rd W) via T = Rd W, then <A_i, W T>.
    Blocks W_blocks, RdW;
    for (int k = 0; k < nblocks; ++k) {
      W_blocks.push_back(nt[static_cast<std::size_t>(k)].W);
      RdW.push_back(Rd[static_cast<std::size_t>(k)] * nt[static_cast<std::size_t>(k)].W);
    }
    Blocks RdW_t;
    for (auto& t : RdW) RdW_t.push_back(t.transpose());
    const Vec a_wrdw = detail::apply_factored(cons, W_blocks, RdW_t);

    // Solves for (dy, dS~) given the scaled complementarity rhs Rc~ (ΔX~ + ΔS~ = Rc~),
    // where A(Rc) is supplied by the caller.
    struct Direction {
      Vec dy;
      Blocks dS_tilde;
      Blocks dX_tilde;
      Blocks dS;
    };
    auto direction = [&](const Vec& a_rc, const Blocks& rc_tilde) {
      Direction d;
      d.dy = schur.solve(Vec(rp - a_rc + a_wrdw));
      d.dS = Rd;
      add_adjoint(cons, Vec(-d.dy), d.dS);
      for (int k = 0; k < nblocks; ++k) {
        const Mat& G = nt[static_cast<std::size_t>(k)].G;
        Mat st = G.transpose() * d.dS[static_cast<std::size_t>(k)] * G;
        symmetrize(st);
        d.dX_tilde.push_back(rc_tilde[static_cast<std::size_t>(k)] - st);
        d.dS_tilde.push_back(std::move(st));
      }
      return d;
    };
    auto step_lengths = [&](const Direction& d) {
      double ap = std::numeric_limits<double>::infinity(), ad = ap;
      for (int k = 0; k < nblocks; ++k) {
        ap = std::min(ap, detail::max_step(nt[static_cast<std::size_t>(k)].v, d.dX_tilde[static_cast<std::size_t>(k)]));
        ad = std::min(ad, detail::max_step(nt[static_cast<std::size_t>(k)].v, d.dS_tilde[static_cast<std::size_t>(k)]));
      }
      return std::pair{std::min(1.0, opt.step_fraction * ap), std::min(1.0, opt.step_fraction * ad)};
    };

    // Predictor: Rc~ = -V, A(Rc) = -A(X).
    Blocks rc_pred;
    for (int k = 0; k < nblocks; ++k) rc_pred.push_back(Mat((-nt[static_cast<std::size_t>(k)].v).asDiagonal()));
    const Direction pred = direction(Vec(-apply_operator(cons, X)), rc_pred);
    const auto [ap_pred, ad_pred] = step_lengths(pred);

    // mu after the affine step, in scaled coordinates: <V + a dX~, V + b dS~>.
    double mu_aff = 0.0;
    for (int k = 0; k < nblocks; ++k) {
      const Vec& v = nt[static_cast<std::size_t>(k)].v;
      Mat xa = ap_pred * pred.dX_tilde[static_cast<std::size_t>(k)];
      xa.diagonal() += v;
      Mat sa = ad_pred * pred.dS_tilde[static_cast<std::size_t>(k)];
      sa.diagonal() += v;
      mu_aff += xa.cwiseProduct(sa).sum();
    }
    mu_aff /= ntot;
    const double ratio = std::clamp(mu_aff / mu, 0.0, 1.0);
    const double sigma = std::pow(ratio, 3.0);

    // Corrector: Rc~_ij = (2 sigma mu d_ij - 2 v_i^2 d_ij - (dXa dSa + dSa dXa)_ij) / (v_i + v_j)
    Blocks rc_corr, rc_corr_gt;
    for (int k = 0; k < nblocks; ++k) {
      const auto& s = nt[static_cast<std::size_t>(k)];
      const Eigen::Index n = s.v.size();
      Mat prod = pred.dX_tilde[static_cast<std::size_t>(k)] * pred.dS_tilde[static_cast<std::size_t>(k)];
      Mat rhs = -(prod + prod.transpose());
      rhs.diagonal().array() += 2.0 * sigma * mu - 2.0 * s.v.array().square();
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) rhs(i, j) /= (s.v(i) + s.v(j));
      symmetrize(rhs);
      rc_corr_gt.push_back(s.G * rhs);  // (G Rc~); A(G Rc~ G') = apply_factored(G Rc~, G)
      rc_corr.push_back(std::move(rhs));
    }
    Blocks G_blocks;
    for (const auto& s : nt) G_blocks.push_back(s.G);
    const Vec a_rc = detail::apply_factored(cons, rc_corr_gt, G_blocks);
    const Direction corr = direction(a_rc, rc_corr);
    const auto [ap, ad] = step_lengths(corr);

    if (!(ap > 0.0) || !(ad > 0.0) || (ap < 1e-10 && ad < 1e-10)) return fallback("step length collapsed");

    for (int k = 0; k < nblocks; ++k) {
      const Mat& G = nt[static_cast<std::size_t>(k)].G;
      Mat dx = G * corr.dX_tilde[static_cast<std::size_t>(k)] * G.transpose();
      X[static_cast<std::size_t>(k)] += ap * dx;
      S[static_cast<std::size_t>(k)] += ad * corr.dS[static_cast<std::size_t>(k)];
      symmetrize(X[static_cast<std::size_t>(k)]);
      symmetrize(S[static_cast<std::size_t>(k)]);
    }
    y += ad * corr.dy;
    project_primal(X);
  }

  const Metrics mt = metrics(X, y, S);
  if (mt.worst() <= best.worst()) return finish(X, y, S, opt.max_iters, Status::inaccurate, "iteration limit reached");
  return finish(best_X, best_y, best_S, best_iter, Status::inaccurate, "iteration limit reached");
}

// ---------------------------------------------------------------------------
// SDPA sparse export. Our primal  min <C,X> s.t. <A_i,X> = b_i  is the SDPA dual
// with F0 = -C, F_i = A_i, c = b, so an SDPA solver reports -f* as its objective.
inline void write_sdpa(const ConicProgram& program, std::ostream& os) {
  program.validate();
  std::ostringstream out;
  out << std::setprecision(17);
  out << "\"simsync conic program: F0 = -C, F_i = A_i, c = b\n";
  out << program.num_constraints() << "\n";
  out << program.blocks.size() << "\n";
  for (std::size_t k = 0; k < program.blocks.size(); ++k) out << (k ? " " : "") << program.blocks[k];
  out << "\n";
  for (int i = 0; i < program.num_constraints(); ++i)
    out << (i ? " " : "") << program.constraints[static_cast<std::size_t>(i)].rhs;
  out << "\n";
  for (std::size_t k = 0; k < program.blocks.size(); ++k) {
    const Mat& c = program.cost[k];
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      for (Eigen::Index j = i; j < c.cols(); ++j)
        if (c(i, j) != 0.0) out << 0 << " " << k + 1 << " " << i + 1 << " " << j + 1 << " " << -c(i, j) << "\n";
  }
  for (int i = 0; i < program.num_constraints(); ++i) {
    const auto canon = detail::canonicalize(program.constraints[static_cast<std::size_t>(i)]);
    for (const auto& e : canon.entries)
      out << i + 1 << " " << e.block + 1 << " " << e.row + 1 << " " << e.col + 1 << " " << e.value << "\n";
  }
  os << out.str();
}

}  // namespace simsync::ipm
