#pragma once

#include "strato/types.hpp"

#include <cmath>
#include <vector>

namespace strato {

inline constexpr double pi_const = 3.14159265358979323846;

struct QuadratureRule1d {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Nodes and weights for the weight exp(-y^2/2)/sqrt(2 pi) (probabilists'
// Hermite). Exact for polynomials of degree <= 2n - 1. Computed by
// Golub-Welsch from the Jacobi matrix of the monic recurrence
// He_{k+1} = y He_k - k He_{k-1}.
inline QuadratureRule1d gauss_hermite(int n) {
  if (n < 1) throw ConfigError("quadrature needs at least one node");
  Vector diag = Vector::Zero(n);
  Vector sub = Vector::Zero(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw std::runtime_error("Hermite rule eigensolve failed");

  QuadratureRule1d rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;  // the weight function has total mass 1
  }
  return rule;
}

// Nodes and weights on [a, b] with unit weight. Newton iteration on the
// Legendre recurrence; exact for polynomials of degree <= 2n - 1.
inline QuadratureRule1d gauss_legendre(int n, double a, double b) {
  if (n < 1) throw ConfigError("quadrature needs at least one node");
  if (!(b > a)) throw ConfigError("quadrature interval is empty");

  QuadratureRule1d rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double xm = 0.5 * (b + a);
  const double xl = 0.5 * (b - a);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(pi_const * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    {
      // refresh the derivative at the converged node for the weight
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
    }
    rule.nodes[i] = xm - xl * z;
    rule.nodes[n - 1 - i] = xm + xl * z;
    rule.weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

}  // namespace strato
