#pragma once

#include "strato/observables.hpp"
#include "strato/potential.hpp"
#include "strato/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace strato {

enum class QuadratureFamily { GaussHermite, GaussLegendre };

struct QuadratureGrid {
  QuadratureFamily family = QuadratureFamily::GaussHermite;
  std::vector<std::pair<double, double>> bounds;  // per axis, Gauss-Legendre only
  int nodes_per_axis = 0;
};

// Gauss-Hermite for Gaussian targets (exact for polynomials), Gauss-Legendre
// on a box wide enough that the density at the boundary is negligible for
// everything else.
inline QuadratureGrid default_grid(const Potential& p) {
  QuadratureGrid grid;
  if (p.quadratic_matrix) {
    grid.family = QuadratureFamily::GaussHermite;
    grid.nodes_per_axis = 24;
    return grid;
  }
  if (p.dim == 2) {
    grid.family = QuadratureFamily::GaussLegendre;
    grid.bounds = {{-60.0, 60.0}, {-140.0, 110.0}};
    grid.nodes_per_axis = 800;
    return grid;
  }
  throw ConfigError("no default integration grid for this potential; supply one");
}

struct ExpectationResult {
  double value = 0.0;
  double error_estimate = 0.0;  // node-doubling difference, relative
  double coverage_ratio = 0.0;  // boundary density over peak density (Gauss-Legendre)
};

namespace detail {

template <class Fn>
void tensor_nodes(const std::vector<QuadratureRule1d>& rules, Fn&& fn) {
  const int d = static_cast<int>(rules.size());
  std::vector<int> idx(d, 0);
  Vector x(d);
  while (true) {
    double w = 1.0;
    bool on_face = false;
    for (int i = 0; i < d; ++i) {
      x[i] = rules[i].nodes[idx[i]];
      w *= rules[i].weights[idx[i]];
      const int m = static_cast<int>(rules[i].nodes.size());
      if (idx[i] == 0 || idx[i] == m - 1) on_face = true;
    }
    fn(x, w, on_face);
    int pos = 0;
    while (pos < d && ++idx[pos] == static_cast<int>(rules[pos].nodes.size())) idx[pos++] = 0;
    if (pos == d) break;
  }
}

inline double hermite_pass(const Potential& p, const Observable& obs, int n_nodes) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(*p.quadratic_matrix);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition of the potential matrix failed");
  const Matrix transform =
      es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal();
  const std::vector<QuadratureRule1d> rules(p.dim, gauss_hermite(n_nodes));
  double sum = 0.0;
  tensor_nodes(rules, [&](const Vector& y, double w, bool) { sum += w * obs.eval(transform * y); });
  return sum;
}

struct LegendrePass {
  double value = 0.0;
  double coverage = 0.0;
};

inline LegendrePass legendre_pass(const Potential& p, const Observable& obs,
                                  const std::vector<std::pair<double, double>>& bounds,
                                  int n_nodes) {
  std::vector<QuadratureRule1d> rules;
  rules.reserve(bounds.size());
  for (const auto& [lo, hi] : bounds) rules.push_back(gauss_legendre(n_nodes, lo, hi));
  double z = 0.0, num = 0.0, peak = 0.0, face = 0.0;
  tensor_nodes(rules, [&](const Vector& x, double w, bool on_face) {
    const double dens = std::exp(-p.value(x));
    z += w * dens;
    num += w * dens * obs.eval(x);
    peak = std::max(peak, dens);
    if (on_face) face = std::max(face, dens);
  });
  if (!(z > 0.0)) throw std::runtime_error("density integrated to zero on the grid");
  LegendrePass pass;
  pass.value = num / z;
  pass.coverage = face / peak;
  return pass;
}

}  // namespace detail

// Normalized expectation of obs under pi ~ exp(-V), with a node-doubling
// error estimate. The Gauss-Legendre path checks that the box captures the
// effective support before trusting the result.
inline ExpectationResult expectation(const Potential& p, const Observable& obs,
                                     const QuadratureGrid& grid) {
  if (grid.nodes_per_axis < 2) throw ConfigError("need at least two quadrature nodes per axis");
  ExpectationResult res;
  double coarse = 0.0, fine = 0.0;
  if (grid.family == QuadratureFamily::GaussHermite) {
    if (!p.quadratic_matrix)
      throw ConfigError("Gauss-Hermite expectations need a quadratic potential");
    coarse = detail::hermite_pass(p, obs, grid.nodes_per_axis);
    fine = detail::hermite_pass(p, obs, 2 * grid.nodes_per_axis);
  } else {
    if (static_cast<int>(grid.bounds.size()) != p.dim)
      throw ConfigError("integration bounds must cover every axis");
    for (const auto& [lo, hi] : grid.bounds)
      if (!(lo < hi)) throw ConfigError("integration bounds must satisfy lo < hi");
    const auto pass1 = detail::legendre_pass(p, obs, grid.bounds, grid.nodes_per_axis);
    const auto pass2 = detail::legendre_pass(p, obs, grid.bounds, 2 * grid.nodes_per_axis);
    res.coverage_ratio = std::max(pass1.coverage, pass2.coverage);
    if (res.coverage_ratio > 1e-12)
      throw ConfigError("integration box too small: boundary density is " +
                        std::to_string(res.coverage_ratio) + " of the peak (limit 1e-12)");
    coarse = pass1.value;
    fine = pass2.value;
  }
  res.value = fine;
  res.error_estimate = std::abs(fine - coarse) / std::max(1.0, std::abs(fine));
  if (res.error_estimate > 1e-8)
    throw std::runtime_error("quadrature did not converge: doubling the nodes moved the result by " +
                             std::to_string(res.error_estimate) + " (relative)");
  return res;
}

inline ExpectationResult expectation(const Potential& p, const Observable& obs) {
  return expectation(p, obs, default_grid(p));
}

}  // namespace strato
