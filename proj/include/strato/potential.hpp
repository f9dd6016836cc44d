#pragma once

#include "strato/types.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <random>

namespace strato {

// A smooth confining potential V on R^d with analytic first and second
// derivatives. The Boltzmann density pi ~ exp(-V) is the invariant measure
// of every dynamics built on top of the potential.
struct Potential {
  int dim = 0;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;

  // Set when V(x) = 0.5 x' S x. Enables the exact Gaussian machinery
  // (Hermite spectral matrices, Gauss-Hermite reference quadrature,
  // exact sampling).
  std::optional<Matrix> quadratic_matrix;

  // Identity token used to detect mismatched potential/field wiring.
  std::uint64_t id = 0;

  double log_density_unnormalized(const Vector& x) const { return -value(x); }
};

namespace detail {

inline std::uint64_t next_potential_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

// V(x) = 0.5 x' S x for symmetric positive definite S.
inline Potential make_quadratic(const Matrix& S) {
  if (S.rows() == 0 || S.rows() != S.cols())
    throw ConfigError("quadratic matrix must be square and non-empty");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError("quadratic matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("quadratic matrix must be positive definite");

  Potential p;
  p.dim = static_cast<int>(S.rows());
  const Matrix Sc = S;
  p.value = [Sc](const Vector& x) { return 0.5 * x.dot(Sc * x); };
  p.gradient = [Sc](const Vector& x) -> Vector { return Sc * x; };
  p.hessian = [Sc](const Vector&) -> Matrix { return Sc; };
  p.quadratic_matrix = Sc;
  p.id = detail::next_potential_id();
  return p;
}

// Banana-shaped planar potential
//   V(x) = x1^2 / 100 + (x2 + b x1^2 - 100 b)^2.
// The density concentrates along the parabolic ridge x2 = 100 b - b x1^2.
// The x1 marginal is exactly N(0, 50) for every b, and conditionally on x1
// the second coordinate is N(100 b - b x1^2, 1/2).
inline Potential make_warped_gaussian(double b) {
  if (!std::isfinite(b)) throw ConfigError("warp parameter must be finite");

  Potential p;
  p.dim = 2;
  p.value = [b](const Vector& x) {
    const double w = x[1] + b * x[0] * x[0] - 100.0 * b;
    return x[0] * x[0] / 100.0 + w * w;
  };
  p.gradient = [b](const Vector& x) -> Vector {
    const double w = x[1] + b * x[0] * x[0] - 100.0 * b;
    Vector g(2);
    g[0] = x[0] / 50.0 + 4.0 * b * x[0] * w;
    g[1] = 2.0 * w;
    return g;
  };
  p.hessian = [b](const Vector& x) -> Matrix {
    const double w = x[1] + b * x[0] * x[0] - 100.0 * b;
    Matrix h(2, 2);
    h(0, 0) = 1.0 / 50.0 + 4.0 * b * w + 8.0 * b * b * x[0] * x[0];
    h(0, 1) = 4.0 * b * x[0];
    h(1, 0) = h(0, 1);
    h(1, 1) = 2.0;
    return h;
  };
  p.id = detail::next_potential_id();
  return p;
}

// Exact sampler for the Gaussian pi ~ exp(-0.5 x' S x). With S = U' U the
// transformed draw x = U^{-1} xi of a standard normal xi has covariance
// S^{-1}.
inline std::function<Vector(std::mt19937_64&)> make_gaussian_sampler(const Potential& p) {
  if (!p.quadratic_matrix)
    throw ConfigError("exact sampling requires a quadratic potential");
  Eigen::LLT<Matrix> llt(*p.quadratic_matrix);
  if (llt.info() != Eigen::Success)
    throw ConfigError("quadratic matrix must be positive definite");
  const Matrix u = llt.matrixU();
  const int d = p.dim;
  return [u, d](std::mt19937_64& rng) -> Vector {
    std::normal_distribution<double> n01;
    Vector xi(d);
    for (int i = 0; i < d; ++i) xi[i] = n01(rng);
    return u.triangularView<Eigen::Upper>().solve(xi);
  };
}

}  // namespace strato
