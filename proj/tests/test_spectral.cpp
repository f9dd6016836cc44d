#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "strato/spectral.hpp"

using strato::ConfigError;
using strato::GeneratorMatrix;
using strato::HermiteBasis;
using strato::Matrix;
using strato::Observable;
using strato::OperatorKind;
using strato::PerturbationField;
using strato::Potential;
using strato::Vector;

namespace {

Potential isotropic2d() { return strato::make_quadratic(Matrix::Identity(2, 2)); }

Potential anisotropic2d() {
  Matrix s = Matrix::Identity(2, 2);
  s(1, 1) = 0.1;
  return strato::make_quadratic(s);
}

PerturbationField rotation_field(const Potential& p, double delta, double theta) {
  return strato::make_field(delta, theta, strato::canonical_rotation(p.dim), p);
}

Matrix block_of_degree(const HermiteBasis& basis, const Matrix& m, int degree) {
  const auto idx = basis.indices_of_degree(degree);
  Matrix out(idx.size(), idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = m(idx[r], idx[c]);
  return out;
}

std::vector<double> sorted_real_eigenvalues(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m);
  std::vector<double> out;
  for (int i = 0; i < m.rows(); ++i) out.push_back(es.eigenvalues()[i].real());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("one-dimensional basis reproduces the Hermite family", "[spectral]") {
  const Potential p = strato::make_quadratic(Matrix::Identity(1, 1));
  const HermiteBasis basis = strato::build_basis(p, 2);
  REQUIRE(basis.size() == 3);

  Vector x(1);
  for (double v : {-1.7, -0.3, 0.0, 0.8, 2.4}) {
    x << v;
    CHECK(basis.value(0, x) == Catch::Approx(1.0).margin(1e-14));
    // The linear mode is fixed up to the sign of the eigenvector.
    CHECK(basis.value(1, x) * basis.value(1, x) == Catch::Approx(v * v).margin(1e-12));
    CHECK(basis.value(2, x) ==
          Catch::Approx((v * v - 1.0) / std::sqrt(2.0)).margin(1e-12));
  }
}

TEST_CASE("multi-indices are enumerated in graded order", "[spectral]") {
  const HermiteBasis basis = strato::build_basis(isotropic2d(), 2);
  const std::vector<std::vector<int>> expected = {{0, 0}, {1, 0}, {0, 1},
                                                  {2, 0}, {1, 1}, {0, 2}};
  REQUIRE(basis.indices == expected);
  CHECK(basis.degree_of(0) == 0);
  CHECK(basis.degree_of(4) == 2);
  CHECK(basis.indices_of_degree(1) == std::vector<int>{1, 2});
}

TEST_CASE("basis functions are orthonormal under the target", "[spectral]") {
  const HermiteBasis basis = strato::build_basis(isotropic2d(), 2);
  const auto rule = strato::gauss_hermite(6);
  const int n = basis.size();
  Matrix gram = Matrix::Zero(n, n);
  Vector x(2);
  for (std::size_t a = 0; a < rule.nodes.size(); ++a)
    for (std::size_t b = 0; b < rule.nodes.size(); ++b) {
      x << rule.nodes[a], rule.nodes[b];
      const double w = rule.weights[a] * rule.weights[b];
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) gram(j, k) += w * basis.value(j, x) * basis.value(k, x);
    }
  CHECK((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("basis size follows the simplex count", "[spectral]") {
  CHECK(strato::build_basis(anisotropic2d(), 5).size() == 21);
  CHECK(strato::build_basis(anisotropic2d(), 10).size() == 66);
}

TEST_CASE("basis construction rejects unusable inputs", "[spectral]") {
  CHECK_THROWS_AS(strato::build_basis(strato::make_warped_gaussian(0.05), 4), ConfigError);
  CHECK_THROWS_AS(strato::build_basis(isotropic2d(), 1), ConfigError);
}

TEST_CASE("unperturbed generator is diagonal on one-dimensional modes", "[spectral]") {
  const Potential p = strato::make_quadratic(Matrix::Identity(1, 1));
  const HermiteBasis basis = strato::build_basis(p, 3);
  const GeneratorMatrix gen = strato::build_generator(basis, p, OperatorKind::DriftDiffusion);
  Matrix expected = Matrix::Zero(4, 4);
  expected.diagonal() << 0.0, -1.0, -2.0, -3.0;
  CHECK((gen.M - expected).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("degree-one blocks match the closed forms", "[spectral]") {
  const double delta = 3.0;

  SECTION("anisotropic curvature shows up as decay rates") {
    const Potential p = anisotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 4);
    const GeneratorMatrix gen = strato::build_generator(basis, p, OperatorKind::DriftDiffusion);
    const auto eigs = sorted_real_eigenvalues(block_of_degree(basis, gen.M, 1));
    CHECK(eigs[0] == Catch::Approx(-1.0).margin(1e-10));
    CHECK(eigs[1] == Catch::Approx(-0.1).margin(1e-10));
  }

  SECTION("advection couples the two modes with the expected strength") {
    const double c = std::sqrt(delta);  // theta = 1/2
    const Potential iso = isotropic2d();
    const HermiteBasis basis_iso = strato::build_basis(iso, 4);
    const GeneratorMatrix a_iso = strato::build_generator(
        basis_iso, iso, OperatorKind::Advection, rotation_field(iso, delta, 0.5));
    const Matrix block_iso = block_of_degree(basis_iso, a_iso.M, 1);
    CHECK(std::abs(block_iso(0, 0)) <= 1e-12);
    CHECK(std::abs(block_iso(1, 1)) <= 1e-12);
    CHECK(std::abs(block_iso(0, 1)) == Catch::Approx(c).margin(1e-10));
    CHECK(block_iso(1, 0) == Catch::Approx(-block_iso(0, 1)).margin(1e-12));

    const Potential aniso = anisotropic2d();
    const HermiteBasis basis_an = strato::build_basis(aniso, 4);
    const GeneratorMatrix a_an = strato::build_generator(
        basis_an, aniso, OperatorKind::Advection, rotation_field(aniso, delta, 0.5));
    const Matrix block_an = block_of_degree(basis_an, a_an.M, 1);
    CHECK(std::abs(block_an(0, 1)) == Catch::Approx(c * std::sqrt(0.1)).margin(1e-10));
  }

  SECTION("isotropic perturbed generator is scalar on linear modes") {
    const Potential iso = isotropic2d();
    const HermiteBasis basis = strato::build_basis(iso, 4);
    const GeneratorMatrix gen = strato::build_generator(
        basis, iso, OperatorKind::PerturbedGenerator, rotation_field(iso, delta, 1.0));
    const Matrix block = block_of_degree(basis, gen.M, 1);
    const Matrix expected = -(1.0 + delta * delta) * Matrix::Identity(2, 2);
    CHECK((block - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SECTION("anisotropic perturbed generator keeps the axis decay split") {
    const Potential p = anisotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 4);
    const double c2 = 10.0;  // delta = 10, theta = 1/2
    const GeneratorMatrix gen = strato::build_generator(
        basis, p, OperatorKind::PerturbedGenerator, rotation_field(p, 10.0, 0.5));
    const auto eigs = sorted_real_eigenvalues(block_of_degree(basis, gen.M, 1));
    CHECK(eigs[0] == Catch::Approx(-(1.0 + 0.1 * c2)).margin(1e-9));
    CHECK(eigs[1] == Catch::Approx(-(0.1 + 0.1 * c2)).margin(1e-9));
  }
}

TEST_CASE("operator assembly has the advertised algebraic structure", "[spectral]") {
  const Potential p = anisotropic2d();
  const HermiteBasis basis = strato::build_basis(p, 6);
  const PerturbationField field = rotation_field(p, 3.0, 0.5);

  const GeneratorMatrix gen_l = strato::build_generator(basis, p, OperatorKind::DriftDiffusion);
  const GeneratorMatrix gen_a = strato::build_generator(basis, p, OperatorKind::Advection, field);
  const GeneratorMatrix gen_s =
      strato::build_generator(basis, p, OperatorKind::PerturbedGenerator, field);

  SECTION("advection is antisymmetric, its square symmetric dissipative") {
    CHECK((gen_a.M + gen_a.M.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    const Matrix a2 = gen_a.M * gen_a.M;
    CHECK((a2 - a2.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a2 + a2.transpose()));
    CHECK(es.eigenvalues().maxCoeff() <= 1e-10);
  }

  SECTION("matrix product and direct quadrature agree") {
    const Matrix expected = gen_l.M + gen_a.M * gen_a.M;
    CHECK((gen_s.M - expected).cwiseAbs().maxCoeff() <= 1e-12);
    const GeneratorMatrix direct = strato::build_perturbed_by_quadrature(basis, p, field);
    CHECK((gen_s.M - direct.M).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SECTION("constant mode decouples from every operator") {
    for (const Matrix* m : {&gen_l.M, &gen_a.M, &gen_s.M}) {
      const double scale = std::max(1.0, m->cwiseAbs().maxCoeff());
      CHECK(m->row(0).cwiseAbs().maxCoeff() <= 1e-10 * scale);
      CHECK(m->col(0).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    }
  }

  SECTION("the Dirichlet form gains exactly the squared advection") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = basis.size();
    for (int trial = 0; trial < 100; ++trial) {
      Vector phi(n);
      for (int j = 0; j < n; ++j) phi[j] = normal(rng);
      const double lhs = phi.dot(-gen_s.M * phi);
      const double rhs = phi.dot(-gen_l.M * phi) + (gen_a.M * phi).squaredNorm();
      CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("drift-perturbed generator is genuinely nonreversible", "[spectral]") {
  const Potential p = anisotropic2d();
  const HermiteBasis basis = strato::build_basis(p, 10);
  for (double delta : {1.0, 4.0, 16.0}) {
    const GeneratorMatrix gen = strato::build_generator(
        basis, p, OperatorKind::NonreversibleGenerator, rotation_field(p, delta, 1.0));
    CHECK((gen.M - gen.M.transpose()).cwiseAbs().maxCoeff() >= 0.1 * delta);
  }

  // Complex spectrum for the drift form, real spectrum for the reversible one.
  const PerturbationField field = rotation_field(p, 16.0, 0.5);
  const auto gap_d = strato::spectral_gap(
      strato::build_generator(basis, p, OperatorKind::NonreversibleGenerator, field));
  const auto gap_s = strato::spectral_gap(
      strato::build_generator(basis, p, OperatorKind::PerturbedGenerator, field));
  CHECK(gap_d.max_imag > 0.01);
  CHECK(gap_s.max_imag <= 1e-8);
}

TEST_CASE("spectral gaps match the closed forms", "[spectral]") {
  SECTION("unperturbed gap equals the smallest curvature") {
    const Potential p = anisotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 10);
    const auto gap = strato::spectral_gap(
        strato::build_generator(basis, p, OperatorKind::DriftDiffusion));
    CHECK(gap.gap == Catch::Approx(0.1).margin(1e-10));
    CHECK(gap.max_imag <= 1e-12);
  }

  SECTION("isotropic perturbed gap saturates at the second level") {
    const Potential p = isotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 6);
    for (double delta : {0.5, 1.0, 2.0, 8.0}) {
      const auto gap = strato::spectral_gap(strato::build_generator(
          basis, p, OperatorKind::PerturbedGenerator, rotation_field(p, delta, 1.0)));
      CHECK(gap.gap == Catch::Approx(std::min(1.0 + delta * delta, 2.0)).margin(1e-9));
    }
  }

  SECTION("zero strength changes nothing") {
    const Potential p = anisotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 8);
    const auto base = strato::spectral_gap(
        strato::build_generator(basis, p, OperatorKind::DriftDiffusion));
    const auto off = strato::spectral_gap(strato::build_generator(
        basis, p, OperatorKind::PerturbedGenerator, rotation_field(p, 0.0, 0.5)));
    CHECK(off.gap == Catch::Approx(base.gap).margin(1e-12));
  }

  SECTION("a generator with a leaking constant mode is rejected") {
    GeneratorMatrix broken;
    broken.kind = OperatorKind::DriftDiffusion;
    broken.M = Matrix::Zero(3, 3);
    broken.M(0, 1) = 0.5;
    broken.M(1, 1) = -1.0;
    broken.M(2, 2) = -2.0;
    CHECK_THROWS_AS(strato::spectral_gap(broken), std::runtime_error);

    GeneratorMatrix tiny;
    tiny.kind = OperatorKind::DriftDiffusion;
    tiny.M = Matrix::Zero(1, 1);
    CHECK_THROWS_AS(strato::spectral_gap(tiny), ConfigError);
  }
}

TEST_CASE("Poisson-equation variance solve matches hand calculations", "[spectral]") {
  SECTION("identity observable in one dimension") {
    const Potential p = strato::make_quadratic(Matrix::Identity(1, 1));
    const HermiteBasis basis = strato::build_basis(p, 4);
    const GeneratorMatrix gen = strato::build_generator(basis, p, OperatorKind::DriftDiffusion);
    const auto res = strato::kv_variance(basis, gen, strato::make_observable("x1", 1));
    CHECK(res.value == Catch::Approx(1.0).margin(1e-12));
    CHECK(res.psi[0] == Catch::Approx(0.0).margin(1e-13));
    CHECK(std::abs(res.psi[1]) == Catch::Approx(1.0).margin(1e-12));
    CHECK(res.projection_residual <= 1e-12);
  }

  SECTION("cubic observable projects onto the linear mode") {
    const Potential p = strato::make_quadratic(Matrix::Identity(1, 1));
    const HermiteBasis basis = strato::build_basis(p, 2);
    const GeneratorMatrix gen = strato::build_generator(basis, p, OperatorKind::DriftDiffusion);
    Observable cube;
    cube.name = "cube";
    cube.eval = [](const Vector& x) { return x[0] * x[0] * x[0]; };
    const auto res = strato::kv_variance(basis, gen, cube);
    // x^3 = sqrt(6) * H3 + 3 x, so the basis keeps 3x and sheds the rest.
    CHECK(res.projection_residual == Catch::Approx(std::sqrt(6.0)).margin(1e-10));
    CHECK(res.value == Catch::Approx(9.0).margin(1e-10));
  }

  SECTION("slow-mode variance and its perturbed value") {
    const Potential p = anisotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 10);
    const Observable x2 = strato::make_observable("x2", 2);
    const auto kv_l = strato::kv_variance(
        basis, strato::build_generator(basis, p, OperatorKind::DriftDiffusion), x2);
    CHECK(kv_l.value == Catch::Approx(100.0).epsilon(1e-8));

    const auto kv_s = strato::kv_variance(
        basis,
        strato::build_generator(basis, p, OperatorKind::PerturbedGenerator,
                                rotation_field(p, 10.0, 0.5)),
        x2);
    CHECK(kv_s.value == Catch::Approx(100.0 / 11.0).epsilon(1e-10));
  }

  SECTION("rotation-invariant observables are untouched") {
    const Potential p = isotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 8);
    const Observable sumsq = strato::make_observable("sumsq", 2);
    const auto kv_l = strato::kv_variance(
        basis, strato::build_generator(basis, p, OperatorKind::DriftDiffusion), sumsq);
    const auto kv_s = strato::kv_variance(
        basis,
        strato::build_generator(basis, p, OperatorKind::PerturbedGenerator,
                                rotation_field(p, 3.0, 1.0)),
        sumsq);
    CHECK(kv_s.value == Catch::Approx(kv_l.value).epsilon(1e-12));
  }

  SECTION("non-self-adjoint kinds are rejected") {
    const Potential p = anisotropic2d();
    const HermiteBasis basis = strato::build_basis(p, 4);
    const PerturbationField field = rotation_field(p, 2.0, 1.0);
    const auto gen_a = strato::build_generator(basis, p, OperatorKind::Advection, field);
    const auto gen_d =
        strato::build_generator(basis, p, OperatorKind::NonreversibleGenerator, field);
    const Observable x1 = strato::make_observable("x1", 2);
    CHECK_THROWS_AS(strato::kv_variance(basis, gen_a, x1), ConfigError);
    CHECK_THROWS_AS(strato::kv_variance(basis, gen_d, x1), ConfigError);
  }
}

TEST_CASE("generator construction validates its inputs", "[spectral]") {
  const Potential p = anisotropic2d();
  const HermiteBasis basis = strato::build_basis(p, 4);
  const PerturbationField field = rotation_field(p, 2.0, 0.5);

  CHECK_THROWS_AS(strato::build_generator(basis, p, OperatorKind::DriftDiffusion, field),
                  ConfigError);
  CHECK_THROWS_AS(strato::build_generator(basis, p, OperatorKind::PerturbedGenerator),
                  ConfigError);

  const Potential other = isotropic2d();
  CHECK_THROWS_AS(strato::build_generator(basis, other, OperatorKind::DriftDiffusion),
                  ConfigError);
  const PerturbationField foreign = rotation_field(other, 2.0, 0.5);
  CHECK_THROWS_AS(
      strato::build_generator(basis, p, OperatorKind::PerturbedGenerator, foreign),
      ConfigError);

  // A hand-supplied field is not certified linear, so the solver refuses it.
  const PerturbationField custom = strato::make_custom_field(
      p,
      [&p](const Vector& x) {
        Vector g(2);
        const Vector gv = p.gradient(x);
        g << gv[1], -gv[0];
        return g;
      },
      [&p](const Vector& x) {
        Matrix j(2, 2);
        const Matrix h = p.hessian(x);
        j.row(0) = h.row(1);
        j.row(1) = -h.row(0);
        return j;
      });
  CHECK_THROWS_AS(
      strato::build_generator(basis, p, OperatorKind::PerturbedGenerator, custom),
      ConfigError);
}

TEST_CASE("improvement certificate pins the anisotropic benchmark", "[spectral]") {
  const Potential p = anisotropic2d();
  const std::vector<double> deltas = {0.0, 1.0, 3.1622776601683795, 10.0};
  const std::vector<Observable> obs = {strato::make_observable("x2", 2),
                                       strato::make_observable("x1x2", 2),
                                       strato::make_observable("sumsq", 2)};
  const auto report = strato::improvement_certificate(p, strato::canonical_rotation(2), deltas,
                                                      0.5, obs, 10);
  REQUIRE(report.rows.size() == 12);
  CHECK(report.all_ok);
  CHECK(report.basis_degree == 10);

  for (const auto& row : report.rows) {
    CHECK(row.ok);
    CHECK(row.lambda_unperturbed == Catch::Approx(0.1).margin(1e-9));
    CHECK(row.theta == 0.5);
  }

  // The reversible-perturbation gap grows monotonically along this grid.
  std::vector<double> gap_by_delta;
  for (const auto& row : report.rows)
    if (row.observable == "x2") gap_by_delta.push_back(row.lambda_perturbed);
  REQUIRE(gap_by_delta.size() == 4);
  CHECK(gap_by_delta[0] == Catch::Approx(0.1).margin(1e-9));
  CHECK(gap_by_delta[1] == Catch::Approx(0.2).margin(1e-9));
  CHECK(gap_by_delta[2] == Catch::Approx(0.41622776601683794).margin(1e-9));
  CHECK(gap_by_delta[3] == Catch::Approx(0.9068287800538688).margin(1e-9));
  CHECK(std::is_sorted(gap_by_delta.begin(), gap_by_delta.end()));

  // Asymptotic variances decrease along the grid, ending at the closed forms.
  for (const auto& name : {"x2", "x1x2", "sumsq"}) {
    std::vector<double> sig;
    for (const auto& row : report.rows)
      if (row.observable == name) sig.push_back(row.sigma2_perturbed);
    REQUIRE(sig.size() == 4);
    for (std::size_t k = 1; k < sig.size(); ++k) CHECK(sig[k] <= sig[k - 1] + 1e-10);
  }
  for (const auto& row : report.rows) {
    if (row.observable == "x2") CHECK(row.sigma2_unperturbed == Catch::Approx(100.0).epsilon(1e-8));
    if (row.observable == "x1x2")
      CHECK(row.sigma2_unperturbed == Catch::Approx(100.0 / 11.0).epsilon(1e-8));
    if (row.observable == "sumsq")
      CHECK(row.sigma2_unperturbed == Catch::Approx(1001.0).epsilon(1e-8));
    if (row.delta == 10.0) {
      if (row.observable == "x2")
        CHECK(row.sigma2_perturbed == Catch::Approx(100.0 / 11.0).epsilon(1e-8));
      if (row.observable == "x1x2")
        CHECK(row.sigma2_perturbed == Catch::Approx(100.0 / 51.0).epsilon(1e-8));
      if (row.observable == "sumsq")
        CHECK(row.sigma2_perturbed == Catch::Approx(184.25).epsilon(1e-8));
    }
  }
}

TEST_CASE("improvement certificate handles the isotropic edge case", "[spectral]") {
  const Potential p = isotropic2d();
  const std::vector<Observable> obs = {strato::make_observable("x1", 2),
                                       strato::make_observable("sumsq", 2)};
  const auto report = strato::improvement_certificate(p, strato::canonical_rotation(2),
                                                      {1.0, 2.0, 4.0}, 1.0, obs, 8);
  CHECK(report.all_ok);
  for (const auto& row : report.rows) {
    CHECK(row.lambda_unperturbed == Catch::Approx(1.0).margin(1e-9));
    CHECK(row.lambda_perturbed == Catch::Approx(2.0).margin(1e-9));
    if (row.observable == "sumsq")
      CHECK(row.sigma2_perturbed == Catch::Approx(row.sigma2_unperturbed).epsilon(1e-10));
    if (row.observable == "x1" && row.delta == 2.0)
      CHECK(row.sigma2_perturbed == Catch::Approx(0.2).margin(1e-10));
  }

  CHECK_THROWS_AS(strato::improvement_certificate(p, strato::canonical_rotation(2), {}, 1.0,
                                                  obs, 8),
                  ConfigError);
  CHECK_THROWS_AS(strato::improvement_certificate(p, strato::canonical_rotation(2), {1.0}, 1.0,
                                                  {}, 8),
                  ConfigError);
}
