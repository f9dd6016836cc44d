// Command line front end: drives the sampling experiments and writes CSVs.
//
// Exit codes: 0 success, 1 a checked property failed, 2 bad configuration,
// 3 trajectory blow-up.

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "strato/experiments.hpp"

namespace {

strato::Matrix parse_s(const std::vector<double>& entries, double lambda) {
  if (!entries.empty()) {
    if (entries.size() != 4)
      throw strato::ConfigError("--s-entries wants 4 comma separated values (row major 2x2)");
    strato::Matrix s(2, 2);
    s << entries[0], entries[1], entries[2], entries[3];
    return s;
  }
  strato::Matrix s = strato::Matrix::Identity(2, 2);
  s(1, 1) = lambda;
  return s;
}

strato::DynamicsKind parse_kind(const std::string& name) {
  if (name == "overdamped") return strato::DynamicsKind::Overdamped;
  if (name == "nonreversible") return strato::DynamicsKind::NonreversibleDrift;
  if (name == "stratonovich") return strato::DynamicsKind::StratonovichPerturbed;
  throw strato::ConfigError("unknown dynamics '" + name +
                            "' (expected overdamped, nonreversible or stratonovich)");
}

int run(int argc, char** argv) {
  CLI::App app{"Langevin sampling toolkit: perturbed dynamics, spectral certificates, "
               "Monte Carlo cross checks"};
  app.set_config("--config", "", "flat key=value configuration file; flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);  // unknown keys are rejected

  std::string mode;
  app.add_option("--mode", mode,
                 "convergence | certificate | stationarity | variance-ratio | reference")
      ->required();
  std::string target = "quadratic";
  app.add_option("--target", target, "quadratic | warped");
  double b = 0.05;
  app.add_option("--b", b, "warp strength of the warped target");
  double lambda = 0.1;
  app.add_option("--lambda", lambda, "second diagonal entry of the quadratic target");
  std::vector<double> s_entries;
  app.add_option("--s-entries", s_entries, "row major 2x2 matrix of the quadratic target")
      ->delimiter(',');
  std::string dynamics = "stratonovich";
  app.add_option("--dynamics", dynamics, "overdamped | nonreversible | stratonovich");
  std::vector<double> deltas;
  app.add_option("--delta", deltas, "perturbation sizes (comma separated)")->delimiter(',');
  double theta = 0.5;
  app.add_option("--theta", theta, "perturbation exponent");
  double dt = 1e-3;
  app.add_option("--dt", dt, "integrator step size");
  double t_end = 1.0;
  app.add_option("--t-end", t_end, "integration horizon");
  int n_traj = 1000;
  app.add_option("--n-traj", n_traj, "number of trajectories");
  std::uint64_t seed = 2026;
  app.add_option("--seed", seed, "base seed; each trajectory derives its own stream");
  std::vector<std::string> observables;
  app.add_option("--observable", observables, "observable names (comma separated)")
      ->delimiter(',');
  int degree = 10;
  app.add_option("--degree", degree, "polynomial degree of the spectral basis");
  std::string out;
  app.add_option("--out", out, "output CSV path, or directory for convergence mode");
  int workers = 0;
  app.add_option("--workers", workers, "worker threads (0 = hardware)");
  int stride = 0;
  app.add_option("--stride", stride, "snapshot stride in steps");
  double burn_in = 0.1;
  app.add_option("--burn-in", burn_in, "fraction of samples discarded before averaging");
  int nodes = 0;
  app.add_option("--nodes", nodes, "quadrature nodes per axis for reference mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 2;
  }

  if (mode == "figure1") mode = "convergence";
  if (mode == "convergence") {
    if (target != "warped" && app.count("--target") > 0 && target != "quadratic")
      throw strato::ConfigError("unknown target '" + target + "'");
    strato::ConvergenceConfig cfg;
    cfg.b = b;
    if (!deltas.empty()) cfg.deltas = deltas;
    if (!observables.empty()) cfg.observable = observables.front();
    cfg.dt = dt;
    if (app.count("--t-end") > 0) cfg.t_end = t_end;
    else cfg.t_end = 4.0;
    cfg.n_traj = n_traj;
    if (stride > 0) cfg.snapshot_stride = stride;
    cfg.seed = seed;
    cfg.n_workers = workers;
    cfg.out_dir = out;
    const strato::ConvergenceResult res = strato::run_convergence(cfg);
    std::printf("reference %s = %.12g\n", cfg.observable.c_str(), res.reference);
    for (const auto& r : res.runs) {
      std::printf("%-14s delta=%-8g final error % .6g", r.dynamics.c_str(), r.delta,
                  r.curve.error.back());
      if (!r.path.empty()) std::printf("  -> %s", r.path.c_str());
      std::printf("\n");
    }
    return 0;
  }

  if (mode == "certificate") {
    strato::CertificateRunConfig cfg;
    cfg.S = parse_s(s_entries, lambda);
    if (!deltas.empty()) cfg.deltas = deltas;
    if (app.count("--theta") > 0) cfg.theta = theta;
    if (!observables.empty()) cfg.observables = observables;
    cfg.degree = degree;
    cfg.out_path = out;
    const strato::CertificateRunResult res = strato::run_certificate(cfg);
    for (const auto& row : res.report.rows)
      std::printf("delta=%-8g %-6s gap %.9f -> %.9f   sigma2 %.9g -> %.9g   %s%s\n", row.delta,
                  row.observable.c_str(), row.lambda_unperturbed, row.lambda_perturbed,
                  row.sigma2_unperturbed, row.sigma2_perturbed, row.ok ? "ok" : "FAIL ",
                  row.detail.c_str());
    if (!res.path.empty()) std::printf("wrote %s\n", res.path.c_str());
    return res.report.all_ok ? 0 : 1;
  }

  if (mode == "stationarity") {
    strato::StationarityConfig cfg;
    cfg.S = parse_s(s_entries, lambda);
    cfg.kind = parse_kind(dynamics);
    if (!deltas.empty()) cfg.delta = deltas.front();
    cfg.theta = theta;
    cfg.n_traj = n_traj;
    cfg.dt = dt;
    if (app.count("--t-end") > 0) cfg.t_end = t_end;
    else cfg.t_end = 2.0;
    if (stride > 0) cfg.snapshot_stride = stride;
    cfg.seed = seed;
    cfg.n_workers = workers;
    cfg.out_path = out;
    const strato::StationarityReport rep = strato::run_stationarity(cfg);
    for (const auto& row : rep.rows)
      std::printf("%-6s reference % .6g  max |z| %.3f at t=%g  %s\n", row.observable.c_str(),
                  row.reference, row.max_abs_z, row.worst_time, row.ok ? "ok" : "FAIL");
    if (!rep.path.empty()) std::printf("wrote %s\n", rep.path.c_str());
    return rep.all_ok ? 0 : 1;
  }

  if (mode == "variance-ratio") {
    strato::VarianceExperimentConfig cfg;
    cfg.S = parse_s(s_entries, lambda);
    if (!deltas.empty()) cfg.delta = deltas.front();
    cfg.theta = theta;
    if (!observables.empty()) cfg.observable = observables.front();
    cfg.n_traj = n_traj;
    if (app.count("--dt") > 0) cfg.dt = dt;
    if (app.count("--t-end") > 0) cfg.t_end = t_end;
    cfg.burn_in = burn_in;
    if (stride > 0) cfg.ratio_stride = stride;
    cfg.seed = seed;
    cfg.n_workers = workers;
    cfg.out_path = out;
    const strato::VarianceExperimentReport rep = strato::run_variance_experiment(cfg);
    for (const auto* side : {&rep.overdamped, &rep.perturbed})
      std::printf("%-14s delta=%-8g mean % .6g  kv %.6g  halfwidth %.3g  scaled var %.6g\n",
                  side->dynamics.c_str(), side->delta, side->time_average, side->kv_variance,
                  side->clt_halfwidth, side->scaled_variance);
    std::printf("variance ratio (perturbed / unperturbed) = %.6g\n", rep.ratio);
    if (!rep.path.empty()) std::printf("wrote %s\n", rep.path.c_str());
    return 0;
  }

  if (mode == "reference") {
    strato::ReferenceRunConfig cfg;
    if (target == "quadratic") cfg.S = parse_s(s_entries, lambda);
    else if (target == "warped") cfg.b = b;
    else throw strato::ConfigError("unknown target '" + target + "'");
    if (!observables.empty()) cfg.observables = observables;
    if (nodes > 0) {
      const strato::Potential p =
          cfg.S ? strato::make_quadratic(*cfg.S) : strato::make_warped_gaussian(cfg.b);
      strato::QuadratureGrid grid = strato::default_grid(p);
      grid.nodes_per_axis = nodes;
      cfg.grid = grid;
    }
    cfg.out_path = out;
    const strato::ReferenceReport rep = strato::run_reference(cfg);
    for (const auto& row : rep.rows)
      std::printf("%-6s = %.12g  (refinement delta %.3g, boundary mass %.3g)\n",
                  row.observable.c_str(), row.result.value, row.result.error_estimate,
                  row.result.coverage_ratio);
    if (!rep.path.empty()) std::printf("wrote %s\n", rep.path.c_str());
    return 0;
  }

  throw strato::ConfigError("unknown mode '" + mode + "'");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const strato::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const strato::BlowupError& e) {
    std::fprintf(stderr, "blow-up: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
