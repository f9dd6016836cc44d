#pragma once

#include "strato/observables.hpp"
#include "strato/perturbation.hpp"
#include "strato/quadrature.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace strato {

// Orthonormal polynomial basis for L2(pi) when pi is Gaussian. With
// S = Q Lambda Q^T and x = transform * y (transform = Q Lambda^{-1/2}), the
// coordinates y are standard normal under pi and products of normalized
// probabilists' Hermite polynomials in y are orthonormal. All basis indices
// are listed in graded order, so index 0 is the constant function.
struct HermiteBasis {
  int dim = 0;
  int max_degree = 0;
  Matrix S;
  Matrix transform;      // x = transform * y
  Matrix inv_transform;  // y = inv_transform * x
  std::vector<std::vector<int>> indices;
  QuadratureRule1d rule;
  std::uint64_t potential_id = 0;

  int size() const { return static_cast<int>(indices.size()); }

  int degree_of(int j) const {
    int deg = 0;
    for (int a : indices[j]) deg += a;
    return deg;
  }

  std::vector<int> indices_of_degree(int deg) const {
    std::vector<int> out;
    for (int j = 0; j < size(); ++j)
      if (degree_of(j) == deg) out.push_back(j);
    return out;
  }

  double value(int j, const Vector& x) const {
    const Vector y = inv_transform * x;
    double v = 1.0;
    for (int i = 0; i < dim; ++i) {
      const int k = indices[j][i];
      double h0 = 1.0, h1 = y[i];
      if (k == 0) {
        v *= h0;
        continue;
      }
      for (int m = 1; m < k; ++m) {
        const double h2 = (y[i] * h1 - std::sqrt(static_cast<double>(m)) * h0) /
                          std::sqrt(static_cast<double>(m + 1));
        h0 = h1;
        h1 = h2;
      }
      v *= h1;
    }
    return v;
  }
};

namespace detail {

inline void enumerate_graded(int dim, int max_degree, std::vector<std::vector<int>>& out) {
  std::vector<int> alpha(dim, 0);
  const std::function<void(int, int)> fill = [&](int pos, int remaining) {
    if (pos == dim - 1) {
      alpha[pos] = remaining;
      out.push_back(alpha);
      return;
    }
    for (int a = remaining; a >= 0; --a) {
      alpha[pos] = a;
      fill(pos + 1, remaining - a);
    }
  };
  for (int deg = 0; deg <= max_degree; ++deg) fill(0, deg);
}

// Visits every tensor quadrature node. At each node fn receives the node in
// x coordinates, the tensor weight, all basis values, all x-gradients
// (column j = grad of basis function j) and all x-Hessians.
template <class Fn>
void for_each_node(const HermiteBasis& basis, Fn&& fn) {
  const int d = basis.dim;
  const int p = basis.max_degree;
  const int n = basis.size();
  const int m = static_cast<int>(basis.rule.nodes.size());

  // Per-node tables of normalized Hermite values and derivatives; every axis
  // shares the same 1-d rule.
  Matrix H(m, p + 1), DH(m, p + 1), D2H(m, p + 1);
  for (int q = 0; q < m; ++q) {
    const double y = basis.rule.nodes[q];
    H(q, 0) = 1.0;
    if (p >= 1) H(q, 1) = y;
    for (int k = 1; k < p; ++k)
      H(q, k + 1) = (y * H(q, k) - std::sqrt(static_cast<double>(k)) * H(q, k - 1)) /
                    std::sqrt(static_cast<double>(k + 1));
    DH(q, 0) = 0.0;
    D2H(q, 0) = 0.0;
    if (p >= 1) D2H(q, 1) = 0.0;
    for (int k = 1; k <= p; ++k) DH(q, k) = std::sqrt(static_cast<double>(k)) * H(q, k - 1);
    for (int k = 2; k <= p; ++k)
      D2H(q, k) = std::sqrt(static_cast<double>(k) * (k - 1)) * H(q, k - 2);
  }

  const Matrix tinv_t = basis.inv_transform.transpose();
  std::vector<int> idx(d, 0);
  Vector y(d);
  Vector vals(n);
  Matrix grads(d, n);
  std::vector<Matrix> hessians(n, Matrix(d, d));
  std::vector<double> f(d), df(d), d2f(d);
  Vector grad_y(d);
  Matrix hess_y(d, d);

  while (true) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      y[i] = basis.rule.nodes[idx[i]];
      w *= basis.rule.weights[idx[i]];
    }
    const Vector x = basis.transform * y;

    for (int j = 0; j < n; ++j) {
      const auto& a = basis.indices[j];
      for (int i = 0; i < d; ++i) {
        f[i] = H(idx[i], a[i]);
        df[i] = DH(idx[i], a[i]);
        d2f[i] = D2H(idx[i], a[i]);
      }
      double val = 1.0;
      for (int i = 0; i < d; ++i) val *= f[i];
      for (int i = 0; i < d; ++i) {
        double rest = 1.0;
        for (int l = 0; l < d; ++l)
          if (l != i) rest *= f[l];
        grad_y[i] = df[i] * rest;
        hess_y(i, i) = d2f[i] * rest;
        for (int l = i + 1; l < d; ++l) {
          double rest2 = 1.0;
          for (int r = 0; r < d; ++r)
            if (r != i && r != l) rest2 *= f[r];
          hess_y(i, l) = df[i] * df[l] * rest2;
          hess_y(l, i) = hess_y(i, l);
        }
      }
      vals[j] = val;
      grads.col(j) = tinv_t * grad_y;
      hessians[j] = tinv_t * hess_y * basis.inv_transform;
    }

    fn(x, w, vals, grads, hessians);

    int pos = 0;
    while (pos < d && ++idx[pos] == m) idx[pos++] = 0;
    if (pos == d) break;
  }
}

inline Matrix assemble_drift_diffusion(const HermiteBasis& basis, const Potential& p) {
  const int n = basis.size();
  Matrix M = Matrix::Zero(n, n);
  Vector applied(n);
  for_each_node(basis, [&](const Vector& x, double w, const Vector& vals, const Matrix& grads,
                           const std::vector<Matrix>& hessians) {
    const Vector gv = p.gradient(x);
    for (int k = 0; k < n; ++k)
      applied[k] = -gv.dot(grads.col(k)) + hessians[k].trace();
    M.noalias() += w * vals * applied.transpose();
  });
  return M;
}

inline Matrix assemble_advection(const HermiteBasis& basis, const PerturbationField& field) {
  const int n = basis.size();
  Matrix M = Matrix::Zero(n, n);
  Vector applied(n);
  for_each_node(basis, [&](const Vector& x, double w, const Vector& vals, const Matrix& grads,
                           const std::vector<Matrix>&) {
    const Vector g = field.value(x);
    for (int k = 0; k < n; ++k) applied[k] = g.dot(grads.col(k));
    M.noalias() += w * vals * applied.transpose();
  });
  // A field in divergence balance with the target makes this operator exactly
  // antisymmetric, so any symmetric part beyond quadrature roundoff means the
  // field is unusable; below that level it is noise and is projected away so
  // that downstream products stay symmetric to machine precision.
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  const double defect = (M + M.transpose()).cwiseAbs().maxCoeff();
  if (defect > 1e-8 * scale)
    throw ConfigError("advection operator is not antisymmetric; the field does not hold the target in balance");
  M = 0.5 * (M - M.transpose().eval());
  return M;
}

// Direct quadrature of the full perturbed generator
//   phi -> -grad V . grad phi + tr hess phi + (g' g) . grad phi + g^T hess phi g,
// bypassing the matrix-product shortcut. Used as a cross-check.
inline Matrix assemble_perturbed_direct(const HermiteBasis& basis, const Potential& p,
                                        const PerturbationField& field) {
  const int n = basis.size();
  Matrix M = Matrix::Zero(n, n);
  Vector applied(n);
  for_each_node(basis, [&](const Vector& x, double w, const Vector& vals, const Matrix& grads,
                           const std::vector<Matrix>& hessians) {
    const Vector gv = p.gradient(x);
    const Vector g = field.value(x);
    const Vector gpg = field.jacobian(x) * g;
    for (int k = 0; k < n; ++k)
      applied[k] = -gv.dot(grads.col(k)) + hessians[k].trace() + gpg.dot(grads.col(k)) +
                   g.dot(hessians[k] * g);
    M.noalias() += w * vals * applied.transpose();
  });
  return M;
}

}  // namespace detail

inline HermiteBasis build_basis(const Potential& p, int max_degree) {
  if (!p.quadratic_matrix)
    throw ConfigError("spectral solver needs a quadratic potential");
  if (max_degree < 2) throw ConfigError("basis degree must be >= 2");
  HermiteBasis basis;
  basis.dim = p.dim;
  basis.max_degree = max_degree;
  basis.S = *p.quadratic_matrix;
  basis.potential_id = p.id;

  Eigen::SelfAdjointEigenSolver<Matrix> es(basis.S);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition of the potential matrix failed");
  const Vector lam = es.eigenvalues();
  basis.transform = es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
  basis.inv_transform = lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();

  detail::enumerate_graded(p.dim, max_degree, basis.indices);
  basis.rule = gauss_hermite(2 * max_degree + 2);

  const int n = basis.size();
  Matrix gram = Matrix::Zero(n, n);
  detail::for_each_node(basis, [&](const Vector&, double w, const Vector& vals, const Matrix&,
                                   const std::vector<Matrix>&) {
    gram.noalias() += w * vals * vals.transpose();
  });
  const double err = (gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
  if (err > 1e-10) {
    char msg[96];
    std::snprintf(msg, sizeof(msg), "basis failed the orthonormality check (max deviation %.3e)",
                  err);
    throw std::runtime_error(msg);
  }
  return basis;
}

enum class OperatorKind { DriftDiffusion, Advection, NonreversibleGenerator, PerturbedGenerator };

inline const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::DriftDiffusion: return "drift_diffusion";
    case OperatorKind::Advection: return "advection";
    case OperatorKind::NonreversibleGenerator: return "nonreversible_generator";
    case OperatorKind::PerturbedGenerator: return "perturbed_generator";
  }
  return "unknown";
}

struct GeneratorMatrix {
  OperatorKind kind = OperatorKind::DriftDiffusion;
  Matrix M;
};

inline GeneratorMatrix build_generator(const HermiteBasis& basis, const Potential& p,
                                       OperatorKind kind,
                                       const std::optional<PerturbationField>& field = std::nullopt) {
  if (p.id != basis.potential_id)
    throw ConfigError("basis was built for a different potential");
  GeneratorMatrix gen;
  gen.kind = kind;
  if (kind == OperatorKind::DriftDiffusion) {
    if (field) throw ConfigError("unperturbed generator takes no field");
    gen.M = detail::assemble_drift_diffusion(basis, p);
    return gen;
  }
  if (!field) throw ConfigError("perturbed generator needs a field");
  if (field->potential_id != p.id)
    throw ConfigError("field was built for a different potential");
  if (!field->linear_in_x)
    throw ConfigError("spectral solver needs a field that is linear in x");
  switch (kind) {
    case OperatorKind::Advection:
      gen.M = detail::assemble_advection(basis, *field);
      break;
    case OperatorKind::NonreversibleGenerator:
      gen.M = detail::assemble_drift_diffusion(basis, p) + detail::assemble_advection(basis, *field);
      break;
    case OperatorKind::PerturbedGenerator: {
      const Matrix a = detail::assemble_advection(basis, *field);
      gen.M = detail::assemble_drift_diffusion(basis, p) + a * a;
      break;
    }
    default:
      throw ConfigError("unknown operator kind");
  }
  return gen;
}

// Same operator as PerturbedGenerator but assembled entry by entry from the
// second-order form, with no reuse of the advection matrix.
inline GeneratorMatrix build_perturbed_by_quadrature(const HermiteBasis& basis, const Potential& p,
                                                     const PerturbationField& field) {
  if (p.id != basis.potential_id)
    throw ConfigError("basis was built for a different potential");
  if (field.potential_id != p.id)
    throw ConfigError("field was built for a different potential");
  GeneratorMatrix gen;
  gen.kind = OperatorKind::PerturbedGenerator;
  gen.M = detail::assemble_perturbed_direct(basis, p, field);
  return gen;
}

struct SpectralGap {
  double gap = 0.0;       // smallest decay rate on the mean-zero subspace
  double max_imag = 0.0;  // largest |Im| over that spectrum
};

// Drops the constant mode (row/column 0 must already vanish) and returns the
// decay rate of the slowest remaining mode. Self-adjoint kinds go through the
// symmetric solver and are cross-checked against the general one.
inline SpectralGap spectral_gap(const GeneratorMatrix& gen) {
  const Matrix& M = gen.M;
  const int n = static_cast<int>(M.rows());
  if (n < 2) throw ConfigError("need at least one non-constant basis function");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  const double edge = std::max(M.row(0).cwiseAbs().maxCoeff(), M.col(0).cwiseAbs().maxCoeff());
  if (edge > 1e-9 * scale)
    throw std::runtime_error("constant mode failed to decouple from the generator");

  const Matrix R = M.block(1, 1, n - 1, n - 1);
  SpectralGap out;
  Eigen::EigenSolver<Matrix> es(R);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigensolve failed");
  double max_re = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < R.rows(); ++i) {
    max_re = std::max(max_re, es.eigenvalues()[i].real());
    out.max_imag = std::max(out.max_imag, std::abs(es.eigenvalues()[i].imag()));
  }
  out.gap = -max_re;

  const bool self_adjoint = gen.kind == OperatorKind::DriftDiffusion ||
                            gen.kind == OperatorKind::PerturbedGenerator;
  if (self_adjoint) {
    const double asym = (R - R.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale)
      throw std::runtime_error("generator matrix lost symmetry");
    Eigen::SelfAdjointEigenSolver<Matrix> sa(0.5 * (R + R.transpose()));
    if (sa.info() != Eigen::Success) throw std::runtime_error("eigensolve failed");
    const double gap_sym = -sa.eigenvalues().maxCoeff();
    if (std::abs(gap_sym - out.gap) > 1e-8 * std::max(1.0, std::abs(gap_sym)))
      throw std::runtime_error("symmetric and general eigensolves disagree");
    out.gap = gap_sym;
  }
  return out;
}

struct KvResult {
  double value = 0.0;  // <psi, phi - pi(phi)> with -generator psi = phi - pi(phi)
  Vector psi;          // basis coefficients of psi (constant component zero)
  double projection_residual = 0.0;  // L2 mass of phi outside the basis span
};

inline KvResult kv_variance(const HermiteBasis& basis, const GeneratorMatrix& gen,
                            const Observable& phi) {
  if (gen.kind != OperatorKind::DriftDiffusion && gen.kind != OperatorKind::PerturbedGenerator)
    throw ConfigError("variance solve needs a self-adjoint generator");
  const int n = basis.size();
  if (gen.M.rows() != n) throw ConfigError("generator and basis sizes do not match");

  Vector c = Vector::Zero(n);
  double phi_sq = 0.0;
  detail::for_each_node(basis, [&](const Vector& x, double w, const Vector& vals, const Matrix&,
                                   const std::vector<Matrix>&) {
    const double f = phi.eval(x);
    c.noalias() += (w * f) * vals;
    phi_sq += w * f * f;
  });

  KvResult res;
  res.projection_residual = std::sqrt(std::max(0.0, phi_sq - c.squaredNorm()));
  const Vector v = c.tail(n - 1);
  const Matrix R = -gen.M.block(1, 1, n - 1, n - 1);
  Eigen::LLT<Matrix> llt(0.5 * (R + R.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("generator is not negative definite on the mean-zero subspace");
  const Vector psi_r = llt.solve(v);
  res.value = psi_r.dot(v);
  res.psi = Vector::Zero(n);
  res.psi.tail(n - 1) = psi_r;
  return res;
}

// One (delta, observable) entry of the improvement certificate. All
// quantities come from the same basis, so the orderings are exact statements
// about the truncated operators.
struct CertificateRow {
  double delta = 0.0;
  double theta = 0.0;
  double lambda_unperturbed = 0.0;
  double lambda_nonreversible = 0.0;
  double lambda_perturbed = 0.0;
  double max_imag_nonreversible = 0.0;
  double max_imag_perturbed = 0.0;
  std::string observable;
  double sigma2_unperturbed = 0.0;
  double sigma2_perturbed = 0.0;
  double cross_term = 0.0;      // <A psi_S, A psi_L>
  double cross_term_alt = 0.0;  // |A psi_S|^2 + <(-L)^{-1} u, u>, u = -A^2 psi_S
  bool ok = false;
  std::string detail;
};

struct CertificateReport {
  std::vector<CertificateRow> rows;
  bool all_ok = false;
  int basis_degree = 0;
};

// Certifies, on the Galerkin truncation, that the perturbation never hurts:
// the spectral gap does not shrink, the asymptotic variance does not grow,
// and the variance drop matches two independent representations of the
// correction term.
inline CertificateReport improvement_certificate(const Potential& p, const SkewMatrix& skew,
                                                 const std::vector<double>& deltas, double theta,
                                                 const std::vector<Observable>& observables,
                                                 int max_degree) {
  if (deltas.empty()) throw ConfigError("need at least one delta");
  if (observables.empty()) throw ConfigError("need at least one observable");
  const HermiteBasis basis = build_basis(p, max_degree);
  const int n = basis.size();

  const GeneratorMatrix gen_l = build_generator(basis, p, OperatorKind::DriftDiffusion);
  const SpectralGap gap_l = spectral_gap(gen_l);
  const Matrix r_l = -gen_l.M.block(1, 1, n - 1, n - 1);
  Eigen::LLT<Matrix> llt_l(0.5 * (r_l + r_l.transpose()));
  if (llt_l.info() != Eigen::Success)
    throw std::runtime_error("unperturbed generator is not negative definite");

  std::vector<KvResult> kv_l;
  for (const auto& obs : observables) kv_l.push_back(kv_variance(basis, gen_l, obs));

  CertificateReport report;
  report.basis_degree = max_degree;
  report.all_ok = true;

  for (double delta : deltas) {
    const PerturbationField field = make_field(delta, theta, skew, p);
    const GeneratorMatrix gen_a = build_generator(basis, p, OperatorKind::Advection, field);
    const GeneratorMatrix gen_d =
        build_generator(basis, p, OperatorKind::NonreversibleGenerator, field);
    GeneratorMatrix gen_s;
    gen_s.kind = OperatorKind::PerturbedGenerator;
    gen_s.M = gen_l.M + gen_a.M * gen_a.M;
    const SpectralGap gap_d = spectral_gap(gen_d);
    const SpectralGap gap_s = spectral_gap(gen_s);

    for (std::size_t k = 0; k < observables.size(); ++k) {
      const KvResult kv_s = kv_variance(basis, gen_s, observables[k]);

      CertificateRow row;
      row.delta = delta;
      row.theta = theta;
      row.lambda_unperturbed = gap_l.gap;
      row.lambda_nonreversible = gap_d.gap;
      row.lambda_perturbed = gap_s.gap;
      row.max_imag_nonreversible = gap_d.max_imag;
      row.max_imag_perturbed = gap_s.max_imag;
      row.observable = observables[k].name;
      row.sigma2_unperturbed = kv_l[k].value;
      row.sigma2_perturbed = kv_s.value;

      const Vector a_psi_s = gen_a.M * kv_s.psi;
      const Vector a_psi_l = gen_a.M * kv_l[k].psi;
      row.cross_term = a_psi_s.dot(a_psi_l);
      const Vector u = (-(gen_a.M * a_psi_s)).tail(n - 1);
      const Vector psi2 = llt_l.solve(u);
      row.cross_term_alt = a_psi_s.squaredNorm() + psi2.dot(u);

      const double scale = std::max(1.0, std::abs(row.sigma2_unperturbed));
      row.ok = true;
      auto check = [&](bool cond, const std::string& what) {
        if (!cond) {
          row.ok = false;
          if (!row.detail.empty()) row.detail += "; ";
          row.detail += what;
        }
      };
      check(row.lambda_perturbed >= row.lambda_unperturbed - 1e-10 * std::max(1.0, gap_l.gap),
            "gap shrank under the perturbation");
      check(row.lambda_nonreversible >= row.lambda_unperturbed - 1e-8 * std::max(1.0, gap_l.gap),
            "gap shrank under the drift perturbation");
      check(row.sigma2_perturbed <= row.sigma2_unperturbed + 1e-8 * scale,
            "asymptotic variance grew");
      check(row.cross_term >= -1e-8 * scale, "correction term is negative");
      check(std::abs(row.sigma2_unperturbed - row.sigma2_perturbed - row.cross_term) <=
                1e-8 * scale,
            "variance drop does not match the correction term");
      check(std::abs(row.cross_term - row.cross_term_alt) <= 1e-8 * scale,
            "correction term representations disagree");
      if (delta == 0.0) {
        check(std::abs(row.lambda_perturbed - row.lambda_unperturbed) <= 1e-10,
              "zero perturbation moved the gap");
        check(std::abs(row.sigma2_perturbed - row.sigma2_unperturbed) <= 1e-10 * scale,
              "zero perturbation moved the variance");
      }
      report.all_ok = report.all_ok && row.ok;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace strato
