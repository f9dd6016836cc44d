#pragma once

#include "strato/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace strato {

// |ensemble mean - reference| per snapshot, with the Monte Carlo standard
// error of the mean alongside.
struct ErrorCurve {
  std::string observable;
  double reference = 0.0;
  std::vector<double> times;
  std::vector<double> error;
  std::vector<double> standard_error;
};

inline ErrorCurve error_curve(const EnsembleResult& res, const std::string& observable) {
  int k = -1;
  for (std::size_t j = 0; j < res.observable_names.size(); ++j)
    if (res.observable_names[j] == observable) k = static_cast<int>(j);
  if (k < 0) throw ConfigError("observable '" + observable + "' was not tracked");
  if (!res.observable_references[k])
    throw ConfigError("observable '" + observable + "' has no reference value");
  ErrorCurve curve;
  curve.observable = observable;
  curve.reference = *res.observable_references[k];
  curve.times = res.times;
  const int n = static_cast<int>(res.times.size());
  curve.error.resize(n);
  curve.standard_error.resize(n);
  const double root_n = std::sqrt(static_cast<double>(res.n_traj));
  for (int t = 0; t < n; ++t) {
    curve.error[t] = std::abs(res.mean[k][t] - curve.reference);
    curve.standard_error[t] = res.sd[k][t] / root_n;
  }
  return curve;
}

struct TimeAverageReport {
  double value = 0.0;           // time average after burn-in
  double burn_in = 0.0;         // fraction of samples discarded
  double kv_variance_estimate = 0.0;  // batch-means estimate of the CLT variance
  double clt_halfwidth = 0.0;   // 95% halfwidth sqrt(kv / T) * 1.96
  int n_batches = 0;
  double duration = 0.0;        // averaging window actually used
};

// Batch-means estimator on an equally spaced scalar series. The first
// floor(burn_in * n) samples are dropped, the remainder is cut into
// floor(sqrt(N)) equal batches (or n_batches when given), and the variance of
// the batch means scaled by the batch duration estimates the variance in the
// ergodic CLT.
inline TimeAverageReport time_average(const std::vector<double>& times,
                                      const std::vector<double>& values,
                                      double burn_in, int n_batches_override = 0) {
  if (times.size() != values.size()) throw ConfigError("times/values size mismatch");
  if (times.size() < 2) throw ConfigError("need at least two samples");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ConfigError("burn_in must be in [0, 1)");
  const double h = times[1] - times[0];
  for (std::size_t t = 1; t < times.size(); ++t)
    if (std::abs((times[t] - times[t - 1]) - h) > 1e-9 * std::max(1.0, std::abs(h)))
      throw ConfigError("samples must be equally spaced in time");

  const std::size_t n_burn =
      static_cast<std::size_t>(burn_in * static_cast<double>(times.size()));
  const std::size_t n = times.size() - n_burn;
  const std::size_t n_batches =
      n_batches_override > 0 ? static_cast<std::size_t>(n_batches_override)
                             : static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  if (n_batches < 10 || n_batches > n / 2)
    throw ConfigError("too few samples for batch means (need >= 100 after burn-in)");
  const std::size_t batch_len = n / n_batches;
  const std::size_t used = n_batches * batch_len;

  std::vector<double> batch_mean(n_batches, 0.0);
  for (std::size_t b = 0; b < n_batches; ++b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < batch_len; ++j) sum += values[n_burn + b * batch_len + j];
    batch_mean[b] = sum / static_cast<double>(batch_len);
  }

  TimeAverageReport rep;
  rep.burn_in = burn_in;
  rep.n_batches = static_cast<int>(n_batches);
  rep.value = std::accumulate(batch_mean.begin(), batch_mean.end(), 0.0) /
              static_cast<double>(n_batches);
  double ss = 0.0;
  for (double m : batch_mean) ss += (m - rep.value) * (m - rep.value);
  const double var_means = ss / static_cast<double>(n_batches - 1);
  const double batch_time = static_cast<double>(batch_len) * h;
  rep.duration = static_cast<double>(used) * h;
  rep.kv_variance_estimate = batch_time * var_means;
  rep.clt_halfwidth = 1.96 * std::sqrt(rep.kv_variance_estimate / rep.duration);
  return rep;
}

struct VarianceRatioConfig {
  int n_traj = 100;
  double dt = 1e-2;
  double t_end = 100.0;
  double burn_in = 0.1;
  std::uint64_t seed = 0;
  int snapshot_stride = 1;
  int n_workers = 0;
  Vector x0;
  std::function<Vector(std::mt19937_64&)> x0_sampler;
};

struct VarianceRatioSide {
  std::string dynamics;
  double mean = 0.0;
  // T * Var over trajectories of the per-trajectory time average; for large
  // T this converges to the variance in the ergodic CLT.
  double scaled_variance = 0.0;
};

struct VarianceRatioReport {
  std::string observable;
  VarianceRatioSide side_a;
  VarianceRatioSide side_b;
  double ratio = 0.0;  // scaled variance of side a over side b
  int n_traj = 0;
  double window = 0.0;
};

namespace detail {

inline VarianceRatioSide variance_side(const DynamicsSpec& spec, const Observable& phi,
                                       const VarianceRatioConfig& cfg, double& window_out) {
  const long n_steps = std::llround(cfg.t_end / cfg.dt);
  if (n_steps < 1) throw ConfigError("t_end must cover at least one step");
  const auto snaps = snapshot_steps(n_steps, cfg.snapshot_stride);
  const std::size_t n_snap = snaps.size();
  const std::size_t n_burn =
      static_cast<std::size_t>(cfg.burn_in * static_cast<double>(n_snap));
  if (n_burn + 2 > n_snap) throw ConfigError("burn-in leaves too few samples");
  const std::size_t n_used = n_snap - n_burn;
  window_out = static_cast<double>(n_used) * cfg.snapshot_stride * cfg.dt;

  std::vector<double> avg(cfg.n_traj, 0.0);
  parallel_for(cfg.n_traj, cfg.n_workers, [&](int i) {
    auto rng = trajectory_rng(cfg.seed, static_cast<std::uint64_t>(i));
    Vector x0 = cfg.x0_sampler ? cfg.x0_sampler(rng) : cfg.x0;
    if (x0.size() != spec.dim) throw ConfigError("initial state dimension mismatch");
    double sum = 0.0;
    integrate_path(spec, x0, cfg.dt, n_steps, snaps, rng, i,
                   [&](std::size_t t, const Vector& x) {
                     if (t >= n_burn) sum += phi.eval(x);
                   });
    avg[i] = sum / static_cast<double>(n_used);
  });

  VarianceRatioSide side;
  side.dynamics = to_string(spec.kind);
  side.mean = std::accumulate(avg.begin(), avg.end(), 0.0) / cfg.n_traj;
  double ss = 0.0;
  for (double a : avg) ss += (a - side.mean) * (a - side.mean);
  side.scaled_variance = window_out * ss / (cfg.n_traj - 1);
  return side;
}

}  // namespace detail

// Runs both dynamics with identical seeds and compares the variance of the
// per-trajectory time averages, scaled by the averaging window.
inline VarianceRatioReport variance_ratio_experiment(const DynamicsSpec& a,
                                                     const DynamicsSpec& b,
                                                     const Observable& phi,
                                                     const VarianceRatioConfig& cfg) {
  if (cfg.n_traj < 2) throw ConfigError("need at least two trajectories");
  if (!(cfg.burn_in >= 0.0 && cfg.burn_in < 1.0)) throw ConfigError("burn_in must be in [0, 1)");
  VarianceRatioReport rep;
  rep.observable = phi.name;
  rep.n_traj = cfg.n_traj;
  double window = 0.0;
  rep.side_a = detail::variance_side(a, phi, cfg, window);
  rep.side_b = detail::variance_side(b, phi, cfg, window);
  rep.window = window;
  if (!(rep.side_b.scaled_variance > 0.0))
    throw ConfigError("degenerate variance on second side");
  rep.ratio = rep.side_a.scaled_variance / rep.side_b.scaled_variance;
  return rep;
}

}  // namespace strato
