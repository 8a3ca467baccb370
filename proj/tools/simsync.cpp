#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "acceptance/criteria.hpp"
#include "simsync/simsync.hpp"

namespace {

using namespace simsync;

enum class Mode { plain, regularized, simsync_gnc, edge_prune_gnc, oracle_prune };

const char* to_string(Mode m) {
  switch (m) {
    case Mode::plain: return "plain";
    case Mode::regularized: return "regularized";
    case Mode::simsync_gnc: return "simsync-gnc";
    case Mode::edge_prune_gnc: return "edge-prune-gnc";
    case Mode::oracle_prune: return "oracle-prune";
  }
  return "unknown";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::plain, Mode::regularized, Mode::simsync_gnc, Mode::edge_prune_gnc, Mode::oracle_prune})
    if (s == to_string(m)) return m;
  throw InputError("unknown mode '" + s + "'");
}

// Everything that determines a solve. Serialized next to every output.
struct RunConfig {
  SimConfig sim;
  std::string graph_path;  // empty: simulate from `sim`
  std::string truth_path;
  Mode mode = Mode::plain;
  double lambda = 0.0;
  double eta_tol = kDefaultEtaTol;
  double confidence = kDefaultConfidence;
  double gnc_sigma = -1.0;  // negative: use sim.sigma, or 0.01 when that is 0
  double assumed_scale = 1.0;
  GncSettings gnc;
  ipm::IpmSettings ipm;
  bool refine = true;
  double depth_trim_quantile = 0.0;
  GaugeMode gauge = GaugeMode::anchor;

  double noise_sigma() const {
    if (gnc_sigma >= 0.0) return gnc_sigma;
    return sim.sigma > 0.0 ? sim.sigma : 0.01;
  }

  void validate() const {
    if (graph_path.empty()) sim.validate();
    if (!truth_path.empty() && graph_path.empty()) throw InputError("--truth requires --graph");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be >= 0");
    if (mode == Mode::regularized && !(lambda > 0.0)) throw InputError("mode regularized needs --lambda > 0");
    if (mode == Mode::plain && lambda != 0.0) throw InputError("mode plain needs --lambda 0; use regularized");
    if (!(eta_tol > 0.0)) throw InputError("eta-tol must be positive");
    if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence must lie in (0, 1)");
    if (!(noise_sigma() > 0.0)) throw InputError("gnc-sigma must be positive");
    if (!(assumed_scale > 0.0)) throw InputError("assumed-scale must be positive");
    if (!(depth_trim_quantile >= 0.0 && depth_trim_quantile < 1.0))
      throw InputError("depth-trim-quantile must lie in [0, 1)");
    if (ipm.max_iters < 1 || !(ipm.gap_tol > 0.0) || !(ipm.feas_tol > 0.0))
      throw InputError("invalid interior-point settings");
    GncSettings g = gnc;
    g.beta = 1.0;
    g.validate();
  }

  json to_json() const {
    json j = {{"mode", to_string(mode)},
              {"lambda", lambda},
              {"eta_tol", eta_tol},
              {"confidence", confidence},
              {"gnc_sigma", noise_sigma()},
              {"assumed_scale", assumed_scale},
              {"gnc", {{"mu_update", gnc.mu_update}, {"max_outer_iters", gnc.max_outer_iters},
                       {"weight_tol", gnc.weight_tol}}},
              {"ipm", {{"gap_tol", ipm.gap_tol}, {"feas_tol", ipm.feas_tol}, {"max_iters", ipm.max_iters},
                       {"step_fraction", ipm.step_fraction}}},
              {"refine", refine},
              {"depth_trim_quantile", depth_trim_quantile},
              {"gauge", simsync::to_string(gauge)}};
    if (graph_path.empty()) {
      j["sim"] = sim_config_to_json(sim);
    } else {
      j["graph"] = graph_path;
      if (!truth_path.empty()) j["truth"] = truth_path;
    }
    return j;
  }
};

json provenance(const std::string& command, const json& config) {
  return {{"tool", "simsync"}, {"version", kVersion}, {"command", command}, {"config", config}};
}

std::string csv_provenance(const json& config) {
  return std::string("simsync ") + kVersion + " config=" + config.dump();
}

void add_sim_flags(CLI::App& app, SimConfig& c, std::string& dataset) {
  app.add_option("--dataset", dataset, "circle | line | grid")->capture_default_str();
  app.add_option("--n-poses", c.n_poses, "number of frames")->capture_default_str();
  app.add_option("--n-points", c.n_points, "world points")->capture_default_str();
  app.add_option("--sigma", c.sigma, "isotropic point noise")->capture_default_str();
  app.add_option("--fov", c.fov_deg, "camera field of view in degrees")->capture_default_str();
  app.add_option("--outlier-rate", c.outlier_rate, "fraction of corrupted matches")->capture_default_str();
  app.add_option("--scale-min", c.scale_min)->capture_default_str();
  app.add_option("--scale-max", c.scale_max)->capture_default_str();
  app.add_option("--max-frame-gap", c.max_frame_gap, "edge candidates at most this many frames apart (-1: dataset default)")
      ->capture_default_str();
  app.add_option("--seed", c.seed)->capture_default_str();
}

void add_solver_flags(CLI::App& app, RunConfig& rc, bool with_lambda = true) {
  if (with_lambda) app.add_option("--lambda", rc.lambda, "scale regularization weight")->capture_default_str();
  app.add_option("--eta-tol", rc.eta_tol, "certification threshold on eta")->capture_default_str();
  app.add_option("--confidence", rc.confidence, "chi-square confidence for the inlier bound")->capture_default_str();
  app.add_option("--gnc-sigma", rc.gnc_sigma, "noise level used for GNC bounds (default: --sigma)");
  app.add_option("--assumed-scale", rc.assumed_scale, "scale used in the per-edge bound")->capture_default_str();
  app.add_option("--gnc-mu-update", rc.gnc.mu_update)->capture_default_str();
  app.add_option("--gnc-max-iters", rc.gnc.max_outer_iters)->capture_default_str();
  app.add_option("--gnc-weight-tol", rc.gnc.weight_tol)->capture_default_str();
  app.add_option("--ipm-gap-tol", rc.ipm.gap_tol)->capture_default_str();
  app.add_option("--ipm-feas-tol", rc.ipm.feas_tol)->capture_default_str();
  app.add_option("--ipm-max-iters", rc.ipm.max_iters)->capture_default_str();
  app.add_flag("!--no-refine", rc.refine, "skip local refinement of the rounded estimate");
  app.add_option("--depth-trim-quantile", rc.depth_trim_quantile, "drop this fraction of deepest keypoints")
      ->capture_default_str();
}

struct Instance {
  ViewGraph graph;
  std::optional<GroundTruth> truth;
};

Instance load_instance(const RunConfig& rc) {
  Instance in;
  if (rc.graph_path.empty()) {
    SimInstance s = simulate(rc.sim);
    in.graph = std::move(s.graph);
    in.truth = std::move(s.truth);
  } else {
    LoadOptions lo;
    lo.depth_trim_quantile = rc.depth_trim_quantile;
    in.graph = load_graph(rc.graph_path, lo);
    if (!rc.truth_path.empty()) {
      GroundTruth t = truth_from_json(io_detail::read_file(rc.truth_path));
      if (t.transforms.size() != in.graph.frames.size())
        throw InputError("ground truth has " + std::to_string(t.transforms.size()) + " transforms, graph has " +
                         std::to_string(in.graph.frames.size()) + " frames");
      in.truth = std::move(t);
    }
  }
  return in;
}

struct MaskScore {
  long kept = 0;
  long kept_inliers = 0;
  long inliers = 0;
  double precision() const { return kept ? static_cast<double>(kept_inliers) / static_cast<double>(kept) : 1.0; }
  double recall() const { return inliers ? static_cast<double>(kept_inliers) / static_cast<double>(inliers) : 1.0; }
};

MaskScore score_masks(const std::vector<std::vector<bool>>& kept, const std::vector<std::vector<bool>>& truth) {
  MaskScore s;
  for (std::size_t e = 0; e < kept.size() && e < truth.size(); ++e)
    for (std::size_t k = 0; k < kept[e].size() && k < truth[e].size(); ++k) {
      s.kept += kept[e][k];
      s.inliers += truth[e][k];
      s.kept_inliers += kept[e][k] && truth[e][k];
    }
  return s;
}

struct TrialOutcome {
  SyncSolution solution;
  std::optional<MetricsReport> metrics;
  std::optional<MaskScore> masks;
  std::vector<std::pair<int, int>> dropped_edges;
  int gnc_iterations = -1;
  double wall_ms = 0.0;
};

TrialOutcome run_trial(const RunConfig& rc, const Instance& in) {
  const auto start = std::chrono::steady_clock::now();
  SyncOptions opt;
  opt.lambda = rc.lambda;
  opt.eta_tol = rc.eta_tol;
  opt.ipm = rc.ipm;
  opt.refine = rc.refine;
  const double sigma = rc.noise_sigma();
  GncSettings gs = rc.gnc;

  TrialOutcome out;
  std::vector<std::vector<bool>> kept;
  switch (rc.mode) {
    case Mode::plain:
    case Mode::regularized:
      out.solution = solve_sync(in.graph, opt);
      break;
    case Mode::simsync_gnc: {
      gs.beta = noise_bound_global(sigma, rc.confidence);
      auto r = simsync_gnc(in.graph, gs, opt);
      out.solution = std::move(r.solution);
      out.gnc_iterations = r.iterations;
      kept = split_mask(in.graph, r.inlier_mask);
      break;
    }
    case Mode::edge_prune_gnc: {
      gs.beta = noise_bound_edge(sigma, rc.assumed_scale, rc.confidence);
      PruneResult p = edge_prune_gnc(in.graph, gs);
      out.solution = solve_sync(p.graph, opt);
      out.dropped_edges = p.dropped_edges;
      kept = std::move(p.masks);
      break;
    }
    case Mode::oracle_prune: {
      if (!in.truth) throw InputError("mode oracle-prune needs ground truth (--truth or a simulated instance)");
      PruneResult p = external_prune_hook(
          in.graph, oracle_pruner(in.truth->transforms, noise_bound_global(sigma, rc.confidence)));
      out.solution = solve_sync(p.graph, opt);
      out.dropped_edges = p.dropped_edges;
      kept = std::move(p.masks);
      break;
    }
  }
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (in.truth) {
    const AlignedPair a = align_gauge(out.solution.transforms, in.truth->transforms, rc.gauge);
    MetricsReport m = compute_metrics(a.est, a.gt);
    m.eta = out.solution.eta;
    out.metrics = m;
    if (!kept.empty() && !in.truth->inlier_masks.empty()) out.masks = score_masks(kept, in.truth->inlier_masks);
  }
  return out;
}

std::string method_label(const RunConfig& rc) {
  if (rc.mode == Mode::plain && rc.lambda > 0.0) return "regularized";
  return to_string(rc.mode);
}

CsvRow make_row(const RunConfig& rc, const TrialOutcome& t, int n_frames) {
  CsvRow r;
  r.seed = rc.sim.seed;
  r.dataset = rc.graph_path.empty() ? simsync::to_string(rc.sim.dataset) : "file";
  r.n_poses = n_frames;
  r.sigma = rc.graph_path.empty() ? rc.sim.sigma : rc.noise_sigma();
  r.lambda = rc.lambda;
  r.outlier_rate = rc.graph_path.empty() ? rc.sim.outlier_rate : 0.0;
  r.method = method_label(rc);
  if (t.metrics) r.metrics = *t.metrics;
  r.metrics.eta = t.solution.eta;
  r.certified = t.solution.certified;
  r.wall_ms = t.wall_ms;
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const SimConfig& c, const std::string& out_graph, const std::string& out_truth) {
  c.validate();
  const SimInstance s = simulate(c);
  const json meta = provenance("simulate", sim_config_to_json(c));
  save_graph(out_graph, s.graph, meta);
  json truth = truth_to_json(s.graph, s.truth);
  truth["meta"] = meta;
  io_detail::write_file(out_truth, truth);
  std::size_t matches = 0;
  for (const auto& e : s.graph.edges) matches += e.matches.size();
  std::cout << "frames: " << s.graph.frames.size() << "\nedges: " << s.graph.edges.size() << "\nmatches: " << matches
            << "\ngraph: " << out_graph << "\ntruth: " << out_truth << "\n";
  return 0;
}

// ---------------------------------------------------------------- solve

int cmd_solve(const RunConfig& rc, const std::string& out_solution, const std::string& out_csv) {
  rc.validate();
  const Instance in = load_instance(rc);
  const TrialOutcome t = run_trial(rc, in);
  const json config = rc.to_json();
  const auto& s = t.solution;

  std::printf("mode: %s\n", method_label(rc).c_str());
  std::printf("sdp-status: %s (%d iterations, gap %.3g)\n", s.sdp_status.c_str(), s.sdp_iterations, s.sdp_gap);
  std::printf("f-star: %.12g\nrho-hat: %.12g\neta: %.6g\n", s.f_star, s.rho_hat, s.eta);
  std::printf("certified: %s%s\n", s.certified ? "yes" : "no", s.exact ? " (exact)" : "");
  std::printf("mean-scale: %.6g\n", mean_scale(s.transforms));
  if (t.gnc_iterations >= 0) std::printf("gnc-iterations: %d\n", t.gnc_iterations);
  if (!t.dropped_edges.empty()) std::printf("dropped-edges: %zu\n", t.dropped_edges.size());
  if (t.masks) {
    std::printf("inlier-precision: %.6f\n", t.masks->precision());
    std::printf("inlier-recall: %.6f\n", t.masks->recall());
  }
  if (t.metrics) {
    const auto& m = *t.metrics;
    std::printf("rot-err-deg: %.6g\ntrans-err: %.6g\nscale-err: %.6g\nate: %.6g\nrpe-t: %.6g\nrpe-r: %.6g\n",
                m.rot_err_deg, m.trans_err, m.scale_err, m.ate, m.rpe_t, m.rpe_r);
  }
  std::printf("solve-ms: %.1f\n", t.wall_ms);

  if (!out_solution.empty()) {
    json doc = solution_to_json(in.graph, s);
    doc["meta"] = provenance("solve", config);
    doc["mode"] = method_label(rc);
    if (t.metrics) {
      const auto& m = *t.metrics;
      doc["metrics"] = {{"rot_err_deg", m.rot_err_deg}, {"trans_err", m.trans_err}, {"scale_err", m.scale_err},
                        {"ate", m.ate},                 {"rpe_t", m.rpe_t},         {"rpe_r", m.rpe_r}};
    }
    if (t.masks) doc["inlier_precision"] = t.masks->precision();
    json dropped = json::array();
    for (const auto& [i, j] : t.dropped_edges) dropped.push_back({in.graph.frames[i].id, in.graph.frames[j].id});
    doc["dropped_edges"] = dropped;
    io_detail::write_file(out_solution, doc);
  }
  if (!out_csv.empty()) {
    std::ostringstream os;
    write_csv(os, {make_row(rc, t, static_cast<int>(in.graph.frames.size()))}, csv_provenance(config));
    write_text(out_csv, os.str());
  }
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepGrid {
  std::vector<std::string> datasets{"circle"};
  std::vector<int> n_poses{10};
  std::vector<double> sigmas{0.01};
  std::vector<double> lambdas{0.0};
  std::vector<double> outlier_rates{0.0};
  std::vector<std::string> modes{"plain"};
  int trials = 5;
  int threads = 0;
};

struct TrialRecord {
  std::size_t point = 0;
  std::optional<CsvRow> row;
  double mean_scale = 0.0;
  std::string error;
};

json grid_to_json(const SweepGrid& g, const RunConfig& base) {
  json b = base.to_json();
  b.erase("mode");
  b.erase("lambda");
  b["sim"].erase("dataset");
  b["sim"].erase("n_poses");
  b["sim"].erase("sigma");
  b["sim"].erase("outlier_rate");
  b["sim"].erase("seed");
  return {{"datasets", g.datasets}, {"n_poses", g.n_poses}, {"sigmas", g.sigmas},   {"lambdas", g.lambdas},
          {"outlier_rates", g.outlier_rates}, {"modes", g.modes}, {"first_seed", base.sim.seed},
          {"trials", g.trials},   {"base", b}};
}

int cmd_sweep(const SweepGrid& grid, const RunConfig& base, const std::string& out_csv, const std::string& out_summary) {
  if (grid.trials < 1) throw InputError("--trials must be >= 1");
  std::vector<RunConfig> points;
  for (const auto& d : grid.datasets)
    for (int n : grid.n_poses)
      for (double sg : grid.sigmas)
        for (double lam : grid.lambdas)
          for (double rate : grid.outlier_rates)
            for (const auto& mode : grid.modes) {
              RunConfig rc = base;
              rc.sim.dataset = parse_dataset(d);
              rc.sim.n_poses = n;
              rc.sim.sigma = sg;
              rc.sim.outlier_rate = rate;
              rc.lambda = lam;
              rc.mode = parse_mode(mode);
              if (rc.mode == Mode::plain && lam > 0.0) rc.mode = Mode::regularized;
              if (rc.mode == Mode::regularized && lam == 0.0) rc.mode = Mode::plain;
              rc.validate();
              points.push_back(rc);
            }

  const int total = static_cast<int>(points.size()) * grid.trials;
  std::vector<TrialRecord> records(static_cast<std::size_t>(total));
  parallel_for(
      total,
      [&](int k) {
        TrialRecord& rec = records[static_cast<std::size_t>(k)];
        rec.point = static_cast<std::size_t>(k / grid.trials);
        RunConfig rc = points[rec.point];
        rc.sim.seed = base.sim.seed + static_cast<std::uint64_t>(k % grid.trials);
        try {
          const Instance in = load_instance(rc);
          const TrialOutcome t = run_trial(rc, in);
          rec.row = make_row(rc, t, rc.sim.n_poses);
          rec.mean_scale = mean_scale(t.solution.transforms);
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
      },
      grid.threads > 0 ? grid.threads : thread_budget());

  const json config = grid_to_json(grid, base);
  std::ostringstream summary;
  summary << "# " << csv_provenance(config) << "\n";
  summary << "dataset,N,sigma,lambda,outlier_rate,method,trials,failures,certified_frac,mean_scale,rot_err_deg,"
             "trans_err,scale_err,ate,rpe_t,rpe_r,eta_max,wall_ms\n";
  for (std::size_t p = 0; p < points.size(); ++p) {
    const RunConfig& rc = points[p];
    int ok = 0, failures = 0, certified = 0;
    double ms = 0, rot = 0, tr = 0, sc = 0, ate = 0, rt = 0, rr = 0, wall = 0, eta_max = -INFINITY;
    for (const auto& rec : records) {
      if (rec.point != p) continue;
      if (!rec.row) {
        ++failures;
        continue;
      }
      ++ok;
      const auto& m = rec.row->metrics;
      certified += rec.row->certified;
      ms += rec.mean_scale;
      rot += m.rot_err_deg;
      tr += m.trans_err;
      sc += m.scale_err;
      ate += m.ate;
      rt += m.rpe_t;
      rr += m.rpe_r;
      wall += rec.row->wall_ms;
      eta_max = std::max(eta_max, m.eta);
    }
    const double d = ok > 0 ? static_cast<double>(ok) : NAN;
    char line[640];
    std::snprintf(line, sizeof line,
                  "%s,%d,%.10g,%.10g,%.10g,%s,%d,%d,%.4f,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.3g,%.1f\n",
                  simsync::to_string(rc.sim.dataset), rc.sim.n_poses, rc.sim.sigma, rc.lambda, rc.sim.outlier_rate,
                  method_label(rc).c_str(), grid.trials, failures, certified / d, ms / d, rot / d, tr / d, sc / d,
                  ate / d, rt / d, rr / d, ok > 0 ? eta_max : NAN, wall / d);
    summary << line;
  }
  std::cout << summary.str();
  for (const auto& rec : records)
    if (!rec.error.empty())
      std::cerr << "trial " << method_label(points[rec.point]) << " N=" << points[rec.point].sim.n_poses
                << " failed: " << rec.error << "\n";
  if (!out_summary.empty()) write_text(out_summary, summary.str());
  if (!out_csv.empty()) {
    std::vector<CsvRow> rows;
    for (const auto& rec : records)
      if (rec.row) rows.push_back(*rec.row);
    std::ostringstream os;
    write_csv(os, rows, csv_provenance(config));
    write_text(out_csv, os.str());
  }
  return 0;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const std::vector<int>& ids, bool quiet) {
  const std::set<int> only(ids.begin(), ids.end());
  for (int id : only)
    if (id < 1 || id > 9) throw InputError("criterion ids run from 1 to 9");
  return acceptance::run_criteria(only, std::cout, !quiet) == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certifiable SIM(3) synchronization from 3D point correspondences"};
  app.set_version_flag("--version", std::string("simsync ") + kVersion);
  app.require_subcommand(1);

  // simulate
  SimConfig sim_cfg;
  std::string sim_dataset = "circle";
  std::string out_graph = "graph.json", out_truth = "truth.json";
  auto* sim = app.add_subcommand("simulate", "generate a synthetic view graph and its ground truth");
  add_sim_flags(*sim, sim_cfg, sim_dataset);
  sim->add_option("--out-graph", out_graph)->capture_default_str();
  sim->add_option("--out-truth", out_truth)->capture_default_str();

  // solve
  RunConfig solve_cfg;
  std::string solve_dataset = "circle", solve_mode = "plain", solve_gauge = "anchor";
  std::string out_solution, out_csv;
  auto* solve = app.add_subcommand("solve", "solve a graph file, or a simulated instance when --graph is absent");
  solve->add_option("--graph", solve_cfg.graph_path, "view-graph JSON");
  solve->add_option("--truth", solve_cfg.truth_path, "ground-truth JSON for metrics");
  add_sim_flags(*solve, solve_cfg.sim, solve_dataset);
  solve->add_option("--mode", solve_mode, "plain | regularized | simsync-gnc | edge-prune-gnc | oracle-prune")
      ->capture_default_str();
  add_solver_flags(*solve, solve_cfg);
  solve->add_option("--gauge", solve_gauge, "anchor | median_scale | umeyama")->capture_default_str();
  solve->add_option("--out-solution", out_solution, "solution JSON");
  solve->add_option("--out-csv", out_csv, "metrics CSV");

  // sweep
  RunConfig sweep_cfg;
  SweepGrid grid;
  std::string sweep_gauge = "anchor";
  std::string sweep_csv, sweep_summary;
  auto* sweep = app.add_subcommand("sweep", "Monte Carlo sweep over a parameter grid");
  sweep->add_option("--dataset", grid.datasets, "comma-separated datasets")->delimiter(',')->capture_default_str();
  sweep->add_option("--n-poses", grid.n_poses)->delimiter(',')->capture_default_str();
  sweep->add_option("--sigma", grid.sigmas)->delimiter(',')->capture_default_str();
  sweep->add_option("--lambda", grid.lambdas)->delimiter(',')->capture_default_str();
  sweep->add_option("--outlier-rate", grid.outlier_rates)->delimiter(',')->capture_default_str();
  sweep->add_option("--mode", grid.modes)->delimiter(',')->capture_default_str();
  sweep->add_option("--trials", grid.trials, "seeds per grid point")->capture_default_str();
  sweep->add_option("--threads", grid.threads, "worker threads (0: SIMSYNC_THREADS or hardware)")
      ->capture_default_str();
  sweep->add_option("--seed", sweep_cfg.sim.seed, "first seed")->capture_default_str();
  sweep->add_option("--n-points", sweep_cfg.sim.n_points)->capture_default_str();
  sweep->add_option("--fov", sweep_cfg.sim.fov_deg)->capture_default_str();
  sweep->add_option("--scale-min", sweep_cfg.sim.scale_min)->capture_default_str();
  sweep->add_option("--scale-max", sweep_cfg.sim.scale_max)->capture_default_str();
  sweep->add_option("--max-frame-gap", sweep_cfg.sim.max_frame_gap)->capture_default_str();
  add_solver_flags(*sweep, sweep_cfg, false);
  sweep->add_option("--gauge", sweep_gauge)->capture_default_str();
  sweep->add_option("--out-csv", sweep_csv, "per-trial CSV");
  sweep->add_option("--out-summary", sweep_summary, "aggregated CSV (also printed)");

  // verify
  std::vector<int> verify_ids;
  bool verify_quiet = false;
  auto* verify = app.add_subcommand("verify", "run the acceptance checks");
  verify->add_option("ids", verify_ids, "criterion ids (default: all)");
  verify->add_flag("--quiet", verify_quiet, "print result lines only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      sim_cfg.dataset = parse_dataset(sim_dataset);
      return cmd_simulate(sim_cfg, out_graph, out_truth);
    }
    if (*solve) {
      solve_cfg.sim.dataset = parse_dataset(solve_dataset);
      solve_cfg.mode = parse_mode(solve_mode);
      solve_cfg.gauge = parse_gauge_mode(solve_gauge);
      return cmd_solve(solve_cfg, out_solution, out_csv);
    }
    if (*sweep) {
      sweep_cfg.gauge = parse_gauge_mode(sweep_gauge);
      return cmd_sweep(grid, sweep_cfg, sweep_csv, sweep_summary);
    }
    if (*verify) return cmd_verify(verify_ids, verify_quiet);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
