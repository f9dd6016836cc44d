#pragma once

#include "strato/potential.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <utility>

namespace strato {

// Constant skew-symmetric matrix, validated entrywise at construction.
struct SkewMatrix {
  Matrix J;
};

inline SkewMatrix make_skew(const Matrix& J) {
  if (J.rows() == 0 || J.rows() != J.cols())
    throw ConfigError("skew matrix must be square and non-empty");
  if ((J + J.transpose()).cwiseAbs().maxCoeff() > 1e-14)
    throw ConfigError("matrix must be skew-symmetric");
  return SkewMatrix{J};
}

// Block-diagonal copies of [[0, 1], [-1, 0]], the planar rotation generator.
inline SkewMatrix canonical_rotation(int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw ConfigError("canonical rotation needs an even dimension >= 2");
  Matrix J = Matrix::Zero(dim, dim);
  for (int k = 0; k + 1 < dim; k += 2) {
    J(k, k + 1) = 1.0;
    J(k + 1, k) = -1.0;
  }
  return SkewMatrix{J};
}

// A vector field g paired with the potential it perturbs. Adding g to the
// overdamped drift, or coupling it to an extra noise channel, leaves
// pi ~ exp(-V) invariant exactly when div(g pi) = 0, i.e. when
// tr g'(x) = g(x) . grad V(x).
//
// Fields produced by make_field have the closed form
//   g(x) = delta^theta J grad V(x)
// which satisfies the identity for any constant skew J.
struct PerturbationField {
  int dim = 0;
  double delta = 0.0;
  double theta = 1.0;
  Matrix J;  // empty for custom fields
  std::uint64_t potential_id = 0;
  bool linear_in_x = false;  // exact for quadratic potentials
  std::function<Vector(const Vector&)> value;
  std::function<Matrix(const Vector&)> jacobian;
  std::function<Vector(const Vector&)> potential_gradient;
};

inline PerturbationField make_field(double delta, double theta,
                                    const SkewMatrix& skew, const Potential& p) {
  if (!std::isfinite(delta) || delta < 0.0)
    throw ConfigError("delta must be finite and >= 0");
  if (!std::isfinite(theta)) throw ConfigError("theta must be finite");
  if (skew.J.rows() != p.dim)
    throw ConfigError("skew matrix dimension does not match potential");

  // delta = 0 disables the perturbation for any theta.
  const double c = delta == 0.0 ? 0.0 : std::pow(delta, theta);

  PerturbationField f;
  f.dim = p.dim;
  f.delta = delta;
  f.theta = theta;
  f.J = skew.J;
  f.potential_id = p.id;
  f.linear_in_x = p.quadratic_matrix.has_value();
  const Matrix cJ = c * skew.J;
  auto grad = p.gradient;
  auto hess = p.hessian;
  f.value = [cJ, grad](const Vector& x) -> Vector { return cJ * grad(x); };
  f.jacobian = [cJ, hess](const Vector& x) -> Matrix { return cJ * hess(x); };
  f.potential_gradient = grad;
  return f;
}

// tr g'(x) - g(x) . grad V(x). Identically zero exactly when the field
// leaves pi invariant.
inline double divergence_defect(const PerturbationField& f, const Vector& x) {
  return f.jacobian(x).trace() - f.value(x).dot(f.potential_gradient(x));
}

// General field with a user-supplied analytic Jacobian. Accepted only if the
// divergence identity holds at 1000 standard Gaussian sample points.
inline PerturbationField make_custom_field(
    const Potential& p, std::function<Vector(const Vector&)> value,
    std::function<Matrix(const Vector&)> jacobian) {
  if (!value || !jacobian) throw ConfigError("custom field needs value and jacobian");

  PerturbationField f;
  f.dim = p.dim;
  f.potential_id = p.id;
  f.linear_in_x = false;
  f.value = std::move(value);
  f.jacobian = std::move(jacobian);
  f.potential_gradient = p.gradient;

  std::mt19937_64 rng(0x51e77a9b2c04u);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Vector x(p.dim);
    for (int i = 0; i < p.dim; ++i) x[i] = n01(rng);
    worst = std::max(worst, std::abs(divergence_defect(f, x)));
  }
  if (worst > 1e-8)
    throw ConfigError("field is not divergence-free for this potential (max defect " +
                      std::to_string(worst) + ")");
  return f;
}

// The Ito drift correction g'(x) g(x) induced by coupling g to its own
// scalar noise channel in the Stratonovich sense.
inline Vector ito_correction(const PerturbationField& f, const Vector& x) {
  return f.jacobian(x) * f.value(x);
}

// Max-norm residual between the two equivalent drift forms
//   -M(x) grad V(x) + (div M)(x)   with M = I + g g',
//   -grad V(x) + g'(x) g(x),
// where (div M)_i = (g' g)_i + g_i tr g' uses the analytic Jacobian only.
// The residual equals g(x) times the divergence defect, so it vanishes for
// every divergence-free field.
inline double remark_drift_equivalence(const PerturbationField& f, const Vector& x) {
  const Vector g = f.value(x);
  const Matrix gp = f.jacobian(x);
  const Vector grad_v = f.potential_gradient(x);
  const Vector gpg = gp * g;
  const Vector div_m = gpg + g * gp.trace();
  const Vector lhs = -(grad_v + g * g.dot(grad_v)) + div_m;
  const Vector rhs = -grad_v + gpg;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace strato
