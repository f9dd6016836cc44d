#pragma once

#include "strato/csv.hpp"
#include "strato/dynamics.hpp"
#include "strato/estimators.hpp"
#include "strato/reference.hpp"
#include "strato/spectral.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace strato {

namespace detail {

inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// convergence: error of the ensemble average vs the quadrature reference, for
// the unperturbed dynamics and both perturbation families on a delta grid.
// ---------------------------------------------------------------------------

struct ConvergenceConfig {
  double b = 0.05;
  std::vector<double> deltas = {0.0, 16.0, 128.0, 256.0};
  std::string observable = "sumsq";
  double dt = 1e-3;
  double t_end = 4.0;
  int n_traj = 1000;
  int snapshot_stride = 1;
  std::uint64_t seed = 2026;
  int n_workers = 0;
  std::string out_dir;  // empty: keep results in memory only
  std::optional<QuadratureGrid> grid;
};

struct ConvergenceRun {
  std::string dynamics;
  double delta = 0.0;
  double theta = 0.0;
  std::string path;
  ErrorCurve curve;
};

struct ConvergenceResult {
  double reference = 0.0;
  std::vector<ConvergenceRun> runs;
};

inline ConvergenceResult run_convergence(const ConvergenceConfig& cfg) {
  if (cfg.deltas.empty()) throw ConfigError("delta grid must not be empty");
  const Potential p = make_warped_gaussian(cfg.b);
  const Observable probe = make_observable(cfg.observable, p.dim);
  const ExpectationResult ref =
      cfg.grid ? expectation(p, probe, *cfg.grid) : expectation(p, probe);
  const Observable obs = make_observable(cfg.observable, p.dim, ref.value);

  struct Plan {
    DynamicsKind kind;
    double delta;
    double theta;
  };
  std::vector<Plan> plans;
  for (double delta : cfg.deltas) {
    if (delta == 0.0) {
      plans.push_back({DynamicsKind::Overdamped, 0.0, 0.0});
    } else {
      plans.push_back({DynamicsKind::NonreversibleDrift, delta, 1.0});
      plans.push_back({DynamicsKind::StratonovichPerturbed, delta, 0.5});
    }
  }

  ConvergenceResult result;
  result.reference = ref.value;
  std::vector<std::string> written;
  try {
    for (const auto& plan : plans) {
      std::optional<PerturbationField> field;
      if (plan.kind != DynamicsKind::Overdamped)
        field = make_field(plan.delta, plan.theta, canonical_rotation(p.dim), p);
      const DynamicsSpec dyn = make_dynamics(plan.kind, p, field);

      EnsembleConfig ec;
      ec.n_traj = cfg.n_traj;
      ec.dt = cfg.dt;
      ec.t_end = cfg.t_end;
      ec.x0 = Vector::Zero(p.dim);
      ec.seed = cfg.seed;
      ec.snapshot_stride = cfg.snapshot_stride;
      ec.n_workers = cfg.n_workers;
      const EnsembleResult ens = run_ensemble(dyn, ec, {obs});

      ConvergenceRun run;
      run.dynamics = to_string(plan.kind);
      run.delta = plan.delta;
      run.theta = plan.theta;
      run.curve = error_curve(ens, obs.name);

      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        run.path = (std::filesystem::path(cfg.out_dir) /
                    ("convergence_" + run.dynamics + "_delta" +
                     detail::short_number(plan.delta) + ".csv"))
                       .string();
        written.push_back(run.path);
        CsvWriter csv(run.path);
        csv.comment("mode convergence");
        csv.comment("target warped b=" + format_double(cfg.b));
        csv.comment("dynamics " + run.dynamics);
        csv.comment("delta " + format_double(plan.delta));
        csv.comment("theta " + format_double(plan.theta));
        csv.comment("observable " + obs.name);
        csv.comment("reference " + format_double(ref.value));
        csv.comment("n_traj " + std::to_string(cfg.n_traj) + " dt " + format_double(cfg.dt) +
                    " t_end " + format_double(cfg.t_end) + " stride " +
                    std::to_string(cfg.snapshot_stride) + " seed " + std::to_string(cfg.seed));
        csv.header({"time", "error", "stderr"});
        for (std::size_t t = 0; t < run.curve.times.size(); ++t)
          csv.row(std::vector<double>{run.curve.times[t], run.curve.error[t],
                                      run.curve.standard_error[t]});
      }
      result.runs.push_back(std::move(run));
    }
  } catch (...) {
    for (const auto& path : written) {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
    throw;
  }
  return result;
}

// ---------------------------------------------------------------------------
// certificate: exact statements about the truncated generators.
// ---------------------------------------------------------------------------

struct CertificateRunConfig {
  Matrix S;
  std::vector<double> deltas = {0.0, 1.0, 3.1622776601683795, 10.0};
  double theta = 0.5;
  std::vector<std::string> observables = {"x2", "x1x2", "sumsq"};
  int degree = 10;
  std::string out_path;
};

struct CertificateRunResult {
  CertificateReport report;
  std::string path;
};

inline CertificateRunResult run_certificate(const CertificateRunConfig& cfg) {
  Matrix s = cfg.S;
  if (s.size() == 0) {
    s = Matrix::Identity(2, 2);
    s(1, 1) = 0.1;
  }
  const Potential p = make_quadratic(s);
  std::vector<Observable> obs;
  for (const auto& name : cfg.observables) obs.push_back(make_observable(name, p.dim));
  CertificateRunResult out;
  out.report =
      improvement_certificate(p, canonical_rotation(p.dim), cfg.deltas, cfg.theta, obs, cfg.degree);
  if (!cfg.out_path.empty()) {
    out.path = cfg.out_path;
    CsvWriter csv(out.path);
    csv.comment("mode certificate");
    csv.comment("degree " + std::to_string(cfg.degree));
    csv.header({"delta", "theta", "lambda_L", "lambda_S", "lambda_D_realpart", "max_imag_L_D",
                "observable", "sigma2_L", "sigma2_S", "cross_term"});
    for (const auto& row : out.report.rows)
      csv.row({format_double(row.delta), format_double(row.theta),
               format_double(row.lambda_unperturbed), format_double(row.lambda_perturbed),
               format_double(row.lambda_nonreversible), format_double(row.max_imag_nonreversible),
               row.observable, format_double(row.sigma2_unperturbed),
               format_double(row.sigma2_perturbed), format_double(row.cross_term)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// stationarity: start the chain in its target law and verify the first and
// second moments stay put, within Monte Carlo bands.
// ---------------------------------------------------------------------------

struct StationarityConfig {
  Matrix S;
  DynamicsKind kind = DynamicsKind::StratonovichPerturbed;
  double delta = 16.0;
  double theta = 0.5;
  int n_traj = 10000;
  double dt = 1e-3;
  double t_end = 2.0;
  int snapshot_stride = 100;
  std::uint64_t seed = 2026;
  int n_workers = 0;
  double band_z = 3.0;
  std::string out_path;
};

struct StationarityRow {
  std::string observable;
  double reference = 0.0;
  double max_abs_z = 0.0;
  double worst_time = 0.0;
  bool ok = false;
};

struct StationarityReport {
  std::vector<StationarityRow> rows;
  bool all_ok = false;
  std::string path;
};

inline StationarityReport run_stationarity(
    const StationarityConfig& cfg,
    const std::optional<PerturbationField>& field_override = std::nullopt) {
  Matrix s = cfg.S;
  if (s.size() == 0) {
    s = Matrix::Identity(2, 2);
    s(1, 1) = 0.1;
  }
  const Potential p = make_quadratic(s);
  std::optional<PerturbationField> field;
  if (cfg.kind != DynamicsKind::Overdamped) {
    if (field_override) {
      // Rebind the injected field to the potential built here; the override
      // supplies value/jacobian and is exercised as-is, validated or not.
      field = *field_override;
      field->dim = p.dim;
      field->potential_id = p.id;
      if (!field->potential_gradient) field->potential_gradient = p.gradient;
    } else {
      field = make_field(cfg.delta, cfg.theta, canonical_rotation(p.dim), p);
    }
  }
  const DynamicsSpec dyn = make_dynamics(cfg.kind, p, field);

  const Matrix sigma = s.inverse();
  std::vector<Observable> tracked = {
      make_observable("x1", p.dim, 0.0),         make_observable("x2", p.dim, 0.0),
      make_observable("x1sq", p.dim, sigma(0, 0)), make_observable("x2sq", p.dim, sigma(1, 1)),
      make_observable("x1x2", p.dim, sigma(0, 1))};

  EnsembleConfig ec;
  ec.n_traj = cfg.n_traj;
  ec.dt = cfg.dt;
  ec.t_end = cfg.t_end;
  ec.seed = cfg.seed;
  ec.snapshot_stride = cfg.snapshot_stride;
  ec.n_workers = cfg.n_workers;
  ec.x0_sampler = make_gaussian_sampler(p);
  const EnsembleResult ens = run_ensemble(dyn, ec, tracked);

  StationarityReport report;
  report.all_ok = true;
  const double root_n = std::sqrt(static_cast<double>(cfg.n_traj));
  for (std::size_t k = 0; k < tracked.size(); ++k) {
    StationarityRow row;
    row.observable = tracked[k].name;
    row.reference = *tracked[k].reference;
    for (std::size_t t = 0; t < ens.times.size(); ++t) {
      const double se = ens.sd[k][t] / root_n;
      const double z = (ens.mean[k][t] - row.reference) / se;
      if (std::abs(z) > row.max_abs_z) {
        row.max_abs_z = std::abs(z);
        row.worst_time = ens.times[t];
      }
    }
    row.ok = row.max_abs_z <= cfg.band_z;
    report.all_ok = report.all_ok && row.ok;
    report.rows.push_back(row);
  }

  if (!cfg.out_path.empty()) {
    report.path = cfg.out_path;
    CsvWriter csv(report.path);
    csv.comment("mode stationarity");
    csv.comment("dynamics " + std::string(to_string(cfg.kind)));
    csv.comment("delta " + format_double(cfg.delta) + " theta " + format_double(cfg.theta));
    csv.comment("n_traj " + std::to_string(cfg.n_traj) + " dt " + format_double(cfg.dt) +
                " t_end " + format_double(cfg.t_end) + " stride " +
                std::to_string(cfg.snapshot_stride) + " seed " + std::to_string(cfg.seed));
    csv.header({"time", "observable", "mean", "reference", "stderr", "z"});
    for (std::size_t t = 0; t < ens.times.size(); ++t)
      for (std::size_t k = 0; k < tracked.size(); ++k) {
        const double se = ens.sd[k][t] / root_n;
        const double z = (ens.mean[k][t] - *tracked[k].reference) / se;
        csv.row({format_double(ens.times[t]), tracked[k].name, format_double(ens.mean[k][t]),
                 format_double(*tracked[k].reference), format_double(se), format_double(z)});
      }
  }
  return report;
}

// ---------------------------------------------------------------------------
// variance: empirical CLT variance of ergodic averages, batch means against
// across-trajectory spread, for the unperturbed and perturbed dynamics.
// ---------------------------------------------------------------------------

struct VarianceExperimentConfig {
  Matrix S;
  double delta = 10.0;
  double theta = 0.5;
  std::string observable = "x2";
  int n_traj = 200;
  double dt = 1e-2;
  double t_end = 2000.0;
  double burn_in = 0.1;
  int ratio_stride = 10;   // sampling stride for the per-trajectory time averages
  int batch_stride = 200;  // coarser stride fed to the batch-means estimator
  std::uint64_t seed = 2026;
  int n_workers = 0;
  std::string out_path;
};

struct VarianceExperimentSide {
  std::string dynamics;
  double delta = 0.0;
  double theta = 0.0;
  double time_average = 0.0;     // mean over trajectories of the time averages
  double kv_variance = 0.0;      // mean over trajectories of the batch-means estimates
  double clt_halfwidth = 0.0;    // per-trajectory halfwidth at the pooled estimate
  double scaled_variance = 0.0;  // window * Var over trajectories of the time averages
};

struct VarianceExperimentReport {
  std::string observable;
  VarianceExperimentSide overdamped;
  VarianceExperimentSide perturbed;
  double ratio = 0.0;  // perturbed scaled variance over overdamped scaled variance
  double window = 0.0;
  std::string path;
};

namespace detail {

inline VarianceExperimentSide variance_experiment_side(const DynamicsSpec& dyn,
                                                       const Observable& phi,
                                                       const VarianceExperimentConfig& cfg,
                                                       double& window_out) {
  const long n_steps = std::llround(cfg.t_end / cfg.dt);
  if (cfg.ratio_stride < 1 || cfg.batch_stride % cfg.ratio_stride != 0)
    throw ConfigError("batch stride must be a multiple of the sampling stride");
  const auto snaps = snapshot_steps(n_steps, cfg.ratio_stride);
  const std::size_t n_snap = snaps.size();
  const int thin = cfg.batch_stride / cfg.ratio_stride;

  std::vector<std::vector<double>> series(cfg.n_traj);
  const Potential& p = dyn.potential;
  parallel_for(cfg.n_traj, cfg.n_workers, [&](int i) {
    auto rng = trajectory_rng(cfg.seed, static_cast<std::uint64_t>(i));
    auto sampler = make_gaussian_sampler(p);
    Vector x0 = sampler(rng);
    auto& out = series[i];
    out.resize(n_snap);
    integrate_path(dyn, x0, cfg.dt, n_steps, snaps, rng, i,
                   [&](std::size_t t, const Vector& x) { out[t] = phi.eval(x); });
  });

  const std::size_t n_burn = static_cast<std::size_t>(cfg.burn_in * static_cast<double>(n_snap));
  if (n_burn + 2 > n_snap) throw ConfigError("burn-in leaves too few samples");
  const std::size_t n_used = n_snap - n_burn;
  window_out = static_cast<double>(n_used) * cfg.ratio_stride * cfg.dt;

  std::vector<double> batch_times, batch_values;
  for (std::size_t t = thin - 1; t < n_snap; t += thin)
    batch_times.push_back(snaps[t] * cfg.dt);
  batch_values.resize(batch_times.size());

  VarianceExperimentSide side;
  side.dynamics = to_string(dyn.kind);
  std::vector<double> averages(cfg.n_traj);
  double kv_sum = 0.0;
  double batch_window = 0.0;
  for (int i = 0; i < cfg.n_traj; ++i) {
    double sum = 0.0;
    for (std::size_t t = n_burn; t < n_snap; ++t) sum += series[i][t];
    averages[i] = sum / static_cast<double>(n_used);
    std::size_t j = 0;
    for (std::size_t t = thin - 1; t < n_snap; t += thin) batch_values[j++] = series[i][t];
    const TimeAverageReport rep = time_average(batch_times, batch_values, cfg.burn_in);
    kv_sum += rep.kv_variance_estimate;
    batch_window = rep.duration;
  }
  side.time_average =
      std::accumulate(averages.begin(), averages.end(), 0.0) / static_cast<double>(cfg.n_traj);
  side.kv_variance = kv_sum / static_cast<double>(cfg.n_traj);
  side.clt_halfwidth = 1.96 * std::sqrt(side.kv_variance / batch_window);
  double ss = 0.0;
  for (double a : averages) ss += (a - side.time_average) * (a - side.time_average);
  side.scaled_variance = window_out * ss / static_cast<double>(cfg.n_traj - 1);
  return side;
}

}  // namespace detail

inline VarianceExperimentReport run_variance_experiment(const VarianceExperimentConfig& cfg) {
  Matrix s = cfg.S;
  if (s.size() == 0) {
    s = Matrix::Identity(2, 2);
    s(1, 1) = 0.1;
  }
  const Potential p = make_quadratic(s);
  const Observable phi = make_observable(cfg.observable, p.dim);

  const DynamicsSpec over = make_dynamics(DynamicsKind::Overdamped, p);
  const PerturbationField field = make_field(cfg.delta, cfg.theta, canonical_rotation(p.dim), p);
  const DynamicsSpec pert = make_dynamics(DynamicsKind::StratonovichPerturbed, p, field);

  VarianceExperimentReport rep;
  rep.observable = phi.name;
  double window = 0.0;
  rep.overdamped = detail::variance_experiment_side(over, phi, cfg, window);
  rep.overdamped.delta = 0.0;
  rep.overdamped.theta = 0.0;
  rep.perturbed = detail::variance_experiment_side(pert, phi, cfg, window);
  rep.perturbed.delta = cfg.delta;
  rep.perturbed.theta = cfg.theta;
  rep.window = window;
  if (!(rep.overdamped.scaled_variance > 0.0))
    throw ConfigError("degenerate variance for the unperturbed side");
  rep.ratio = rep.perturbed.scaled_variance / rep.overdamped.scaled_variance;

  if (!cfg.out_path.empty()) {
    rep.path = cfg.out_path;
    CsvWriter csv(rep.path);
    csv.comment("mode variance-ratio");
    csv.comment("observable " + phi.name);
    csv.comment("n_traj " + std::to_string(cfg.n_traj) + " dt " + format_double(cfg.dt) +
                " t_end " + format_double(cfg.t_end) + " burn_in " + format_double(cfg.burn_in) +
                " seed " + std::to_string(cfg.seed));
    csv.comment("strides ratio " + std::to_string(cfg.ratio_stride) + " batch " +
                std::to_string(cfg.batch_stride));
    csv.header({"spec", "delta", "theta", "observable", "time_average", "kv_variance",
                "clt_halfwidth"});
    for (const auto* side : {&rep.overdamped, &rep.perturbed})
      csv.row({side->dynamics, format_double(side->delta), format_double(side->theta), phi.name,
               format_double(side->time_average), format_double(side->kv_variance),
               format_double(side->clt_halfwidth)});
    csv.comment("scaled_variance " + rep.overdamped.dynamics + " " +
                format_double(rep.overdamped.scaled_variance));
    csv.comment("scaled_variance " + rep.perturbed.dynamics + " " +
                format_double(rep.perturbed.scaled_variance));
    csv.comment("ratio " + format_double(rep.ratio));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// reference: quadrature expectations on their own.
// ---------------------------------------------------------------------------

struct ReferenceRunConfig {
  std::optional<Matrix> S;  // quadratic target when set, warped otherwise
  double b = 0.05;
  std::vector<std::string> observables = {"sumsq"};
  std::optional<QuadratureGrid> grid;
  std::string out_path;
};

struct ReferenceRow {
  std::string observable;
  ExpectationResult result;
};

struct ReferenceReport {
  std::vector<ReferenceRow> rows;
  std::string path;
};

inline ReferenceReport run_reference(const ReferenceRunConfig& cfg) {
  const Potential p = cfg.S ? make_quadratic(*cfg.S) : make_warped_gaussian(cfg.b);
  ReferenceReport rep;
  for (const auto& name : cfg.observables) {
    const Observable obs = make_observable(name, p.dim);
    ReferenceRow row;
    row.observable = name;
    row.result = cfg.grid ? expectation(p, obs, *cfg.grid) : expectation(p, obs);
    rep.rows.push_back(row);
  }
  if (!cfg.out_path.empty()) {
    rep.path = cfg.out_path;
    CsvWriter csv(rep.path);
    csv.comment("mode reference");
    csv.comment(cfg.S ? "target quadratic" : "target warped b=" + format_double(cfg.b));
    csv.header({"observable", "value", "error_estimate", "coverage_ratio"});
    for (const auto& row : rep.rows)
      csv.row({row.observable, format_double(row.result.value),
               format_double(row.result.error_estimate), format_double(row.result.coverage_ratio)});
  }
  return rep;
}

}  // namespace strato
