#pragma once

#include "strato/observables.hpp"
#include "strato/perturbation.hpp"

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace strato {

enum class DynamicsKind { Overdamped, NonreversibleDrift, StratonovichPerturbed };

inline const char* to_string(DynamicsKind k) {
  switch (k) {
    case DynamicsKind::Overdamped: return "overdamped";
    case DynamicsKind::NonreversibleDrift: return "nonreversible";
    case DynamicsKind::StratonovichPerturbed: return "stratonovich";
  }
  return "unknown";
}

// A concrete SDE in Ito form,
//   dX = b(X) dt + sum_i c_i(X) dW_i,
// sharing the invariant density pi ~ exp(-V) of its potential:
//
//   Overdamped             b = -grad V           c_i = sqrt(2) e_i
//   NonreversibleDrift     b = -grad V + g       c_i = sqrt(2) e_i
//   StratonovichPerturbed  b = -grad V + g' g    c_i = sqrt(2) e_i, plus an
//                          extra channel c_d = sqrt(2) g(x)
//
// The g' g term is the Ito form of coupling g to its own Wiener channel in
// the Stratonovich sense; it is what keeps the extra multiplicative noise
// measure-preserving.
struct DynamicsSpec {
  DynamicsKind kind = DynamicsKind::Overdamped;
  Potential potential;
  std::optional<PerturbationField> field;
  int dim = 0;
  int noise_channels = 0;

  Vector drift(const Vector& x) const {
    switch (kind) {
      case DynamicsKind::Overdamped:
        return -potential.gradient(x);
      case DynamicsKind::NonreversibleDrift:
        return field->value(x) - potential.gradient(x);
      case DynamicsKind::StratonovichPerturbed:
        return ito_correction(*field, x) - potential.gradient(x);
    }
    throw ConfigError("unknown dynamics kind");
  }

  // Diffusion column paired with Wiener channel i.
  Vector noise_column(int channel, const Vector& x) const {
    static const double root2 = std::sqrt(2.0);
    if (channel < 0 || channel >= noise_channels)
      throw ConfigError("noise channel out of range");
    if (channel < dim) {
      Vector c = Vector::Zero(dim);
      c[channel] = root2;
      return c;
    }
    return root2 * field->value(x);
  }
};

inline DynamicsSpec make_dynamics(DynamicsKind kind, const Potential& p,
                                  const std::optional<PerturbationField>& field = std::nullopt) {
  if (p.dim < 1 || !p.value || !p.gradient || !p.hessian)
    throw ConfigError("potential is incomplete");
  if (kind == DynamicsKind::Overdamped) {
    if (field) throw ConfigError("overdamped dynamics takes no perturbation field");
  } else {
    if (!field) throw ConfigError("perturbed dynamics needs a field");
    if (field->dim != p.dim) throw ConfigError("field dimension does not match potential");
    if (field->potential_id != p.id)
      throw ConfigError("field was built for a different potential");
  }
  DynamicsSpec spec;
  spec.kind = kind;
  spec.potential = p;
  spec.field = field;
  spec.dim = p.dim;
  spec.noise_channels = p.dim + (kind == DynamicsKind::StratonovichPerturbed ? 1 : 0);
  return spec;
}

// One explicit Euler step
//   x + dt b(x) + sqrt(dt) sum_i c_i(x) xi_i
// with one standard normal draw per noise channel.
inline Vector em_step(const DynamicsSpec& spec, const Vector& x, double dt,
                      std::span<const double> draws) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (static_cast<int>(draws.size()) != spec.noise_channels)
    throw ConfigError("draw count must match noise channel count");
  Vector next = x + dt * spec.drift(x);
  const double root = std::sqrt(2.0 * dt);
  for (int i = 0; i < spec.dim; ++i) next[i] += root * draws[i];
  if (spec.kind == DynamicsKind::StratonovichPerturbed)
    next += (root * draws[spec.dim]) * spec.field->value(x);
  return next;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream for one trajectory, derived from (seed, index) alone so results do
// not depend on how trajectories are scheduled across workers.
inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index + 1)));
}

namespace detail {

inline std::vector<long> snapshot_steps(long n_steps, int stride) {
  std::vector<long> steps;
  for (long s = stride; s <= n_steps; s += stride) steps.push_back(s);
  if (steps.empty() || steps.back() != n_steps) steps.push_back(n_steps);
  return steps;
}

// Static contiguous partition; any exception is captured and rethrown on the
// calling thread after the join.
inline void parallel_for(int n, int n_workers, const std::function<void(int)>& body) {
  int w = n_workers > 0 ? n_workers
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  if (w > n) w = n;
  if (w <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  // Chunks are contiguous and ascending, and each worker keeps only its first
  // exception, so rethrowing in worker order reports the lowest-indexed
  // failure no matter how many workers ran.
  const int chunk = (n + w - 1) / w;
  std::vector<std::exception_ptr> errors((n + chunk - 1) / chunk);
  auto run_range = [&](int slot, int lo, int hi) {
    try {
      for (int i = lo; i < hi; ++i) body(i);
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (int lo = 0, slot = 0; lo < n; lo += chunk, ++slot)
    threads.emplace_back(run_range, slot, lo, std::min(n, lo + chunk));
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Integrates one trajectory, invoking on_snapshot(snapshot_index, state) at
// the recorded steps.
template <class SnapshotFn>
void integrate_path(const DynamicsSpec& spec, Vector x, double dt, long n_steps,
                    const std::vector<long>& snaps, std::mt19937_64& rng,
                    int trajectory_index, SnapshotFn&& on_snapshot) {
  std::normal_distribution<double> n01;
  std::vector<double> draws(spec.noise_channels);
  std::size_t next = 0;
  for (long step = 1; step <= n_steps && next < snaps.size(); ++step) {
    for (auto& d : draws) d = n01(rng);
    x = em_step(spec, x, dt, draws);
    if (!x.allFinite())
      throw BlowupError(trajectory_index, step, std::numeric_limits<double>::quiet_NaN());
    const double norm = x.norm();
    if (norm > blowup_threshold) throw BlowupError(trajectory_index, step, norm);
    if (step == snaps[next]) {
      on_snapshot(next, x);
      ++next;
    }
  }
}

}  // namespace detail

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<Vector> states;
};

// Single path with snapshots every snapshot_stride steps; the final step is
// always recorded.
inline TrajectoryResult run_trajectory(const DynamicsSpec& spec, const Vector& x0,
                                       double dt, double t_end, int snapshot_stride,
                                       std::mt19937_64& rng, int trajectory_index = 0) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (snapshot_stride < 1) throw ConfigError("snapshot stride must be >= 1");
  if (x0.size() != spec.dim) throw ConfigError("initial state dimension mismatch");
  const long n_steps = std::llround(t_end / dt);
  if (n_steps < 1) throw ConfigError("t_end must cover at least one step");

  const auto snaps = detail::snapshot_steps(n_steps, snapshot_stride);
  TrajectoryResult out;
  out.times.resize(snaps.size());
  out.states.resize(snaps.size());
  for (std::size_t k = 0; k < snaps.size(); ++k) out.times[k] = snaps[k] * dt;
  detail::integrate_path(spec, x0, dt, n_steps, snaps, rng, trajectory_index,
                         [&](std::size_t k, const Vector& x) { out.states[k] = x; });
  return out;
}

struct EnsembleConfig {
  int n_traj = 1;
  double dt = 1e-3;
  double t_end = 1.0;
  Vector x0;
  std::uint64_t seed = 0;
  int snapshot_stride = 1;
  bool store_states = false;
  int n_workers = 0;  // 0: hardware concurrency
  // Optional initial-state sampler; consumes the trajectory stream before
  // integration, so the whole path is reproducible from (seed, index).
  std::function<Vector(std::mt19937_64&)> x0_sampler;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<std::string> observable_names;
  std::vector<std::optional<double>> observable_references;
  // mean[k][t], sd[k][t]: across-trajectory mean and sample standard
  // deviation of observable k at times[t].
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> sd;
  // states[t][i]: trajectory i at times[t]; filled when store_states is set.
  std::vector<std::vector<Vector>> states;
  int n_traj = 0;
  EnsembleConfig config;
};

// Integrates n_traj independent trajectories. Each trajectory writes into
// its own preallocated slot and the statistics are reduced afterwards in
// trajectory order, so the result is bit-identical for a fixed seed no
// matter how many workers run.
inline EnsembleResult run_ensemble(const DynamicsSpec& spec, const EnsembleConfig& cfg,
                                   const std::vector<Observable>& tracked = {}) {
  if (cfg.n_traj < 1) throw ConfigError("n_traj must be >= 1");
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  if (cfg.snapshot_stride < 1) throw ConfigError("snapshot stride must be >= 1");
  if (!cfg.x0_sampler && cfg.x0.size() != spec.dim)
    throw ConfigError("initial state dimension mismatch");
  const long n_steps = std::llround(cfg.t_end / cfg.dt);
  if (n_steps < 1) throw ConfigError("t_end must cover at least one step");

  const auto snaps = detail::snapshot_steps(n_steps, cfg.snapshot_stride);
  const int n_snap = static_cast<int>(snaps.size());
  const int n_obs = static_cast<int>(tracked.size());

  EnsembleResult res;
  res.n_traj = cfg.n_traj;
  res.config = cfg;
  res.times.resize(n_snap);
  for (int t = 0; t < n_snap; ++t) res.times[t] = snaps[t] * cfg.dt;
  for (const auto& obs : tracked) {
    res.observable_names.push_back(obs.name);
    res.observable_references.push_back(obs.reference);
  }

  std::vector<Matrix> vals(n_obs);  // vals[k](t, i)
  for (auto& m : vals) m.resize(n_snap, cfg.n_traj);
  if (cfg.store_states)
    res.states.assign(n_snap, std::vector<Vector>(cfg.n_traj));

  detail::parallel_for(cfg.n_traj, cfg.n_workers, [&](int i) {
    auto rng = trajectory_rng(cfg.seed, static_cast<std::uint64_t>(i));
    Vector x0 = cfg.x0_sampler ? cfg.x0_sampler(rng) : cfg.x0;
    if (x0.size() != spec.dim) throw ConfigError("sampled initial state dimension mismatch");
    detail::integrate_path(spec, x0, cfg.dt, n_steps, snaps, rng, i,
                           [&](std::size_t t, const Vector& x) {
                             for (int k = 0; k < n_obs; ++k)
                               vals[k](static_cast<int>(t), i) = tracked[k].eval(x);
                             if (cfg.store_states) res.states[t][i] = x;
                           });
  });

  res.mean.assign(n_obs, std::vector<double>(n_snap, 0.0));
  res.sd.assign(n_obs, std::vector<double>(n_snap, 0.0));
  for (int k = 0; k < n_obs; ++k) {
    for (int t = 0; t < n_snap; ++t) {
      double sum = 0.0;
      for (int i = 0; i < cfg.n_traj; ++i) sum += vals[k](t, i);
      const double mean = sum / cfg.n_traj;
      double ss = 0.0;
      for (int i = 0; i < cfg.n_traj; ++i) {
        const double d = vals[k](t, i) - mean;
        ss += d * d;
      }
      res.mean[k][t] = mean;
      res.sd[k][t] = cfg.n_traj > 1 ? std::sqrt(ss / (cfg.n_traj - 1)) : 0.0;
    }
  }
  return res;
}

}  // namespace strato
