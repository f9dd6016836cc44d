#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "strato/potential.hpp"

using strato::ConfigError;
using strato::Matrix;
using strato::Potential;
using strato::Vector;

namespace {

Vector vec2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

Matrix anisotropic() {
  Matrix s = Matrix::Identity(2, 2);
  s(1, 1) = 0.1;
  return s;
}

// Central finite differences of value -> gradient.
Vector fd_gradient(const Potential& p, const Vector& x, double h) {
  Vector g(p.dim);
  for (int i = 0; i < p.dim; ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (p.value(xp) - p.value(xm)) / (2.0 * h);
  }
  return g;
}

// Central finite differences of gradient -> hessian.
Matrix fd_hessian(const Potential& p, const Vector& x, double h) {
  Matrix m(p.dim, p.dim);
  for (int j = 0; j < p.dim; ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    m.col(j) = (p.gradient(xp) - p.gradient(xm)) / (2.0 * h);
  }
  return m;
}

}  // namespace

TEST_CASE("quadratic potential evaluates value and derivatives", "[potentials]") {
  const Potential p = strato::make_quadratic(anisotropic());
  REQUIRE(p.dim == 2);

  CHECK(p.value(vec2(0, 0)) == 0.0);
  CHECK(p.gradient(vec2(0, 0)).norm() == 0.0);

  CHECK(p.value(vec2(1, 1)) == Catch::Approx(0.55).margin(1e-15));
  const Vector g = p.gradient(vec2(1, 1));
  CHECK(g[0] == Catch::Approx(1.0).margin(1e-15));
  CHECK(g[1] == Catch::Approx(0.1).margin(1e-15));

  const Potential iso = strato::make_quadratic(Matrix::Identity(2, 2));
  CHECK(iso.value(vec2(3, 4)) == Catch::Approx(12.5).margin(1e-12));
  CHECK((iso.gradient(vec2(3, 4)) - vec2(3, 4)).norm() == 0.0);
  CHECK((iso.hessian(vec2(3, 4)) - Matrix::Identity(2, 2)).norm() == 0.0);

  REQUIRE(p.quadratic_matrix.has_value());
  CHECK((*p.quadratic_matrix - anisotropic()).norm() == 0.0);
}

TEST_CASE("quadratic potential rejects bad matrices", "[potentials]") {
  Matrix rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(strato::make_quadratic(rect), ConfigError);

  Matrix asym(2, 2);
  asym << 1.0, 0.3, 0.0, 1.0;
  CHECK_THROWS_AS(strato::make_quadratic(asym), ConfigError);

  Matrix indef(2, 2);
  indef << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(strato::make_quadratic(indef), ConfigError);

  Matrix singular = Matrix::Zero(2, 2);
  singular(0, 0) = 1.0;
  CHECK_THROWS_AS(strato::make_quadratic(singular), ConfigError);
}

TEST_CASE("warped potential evaluates value and derivatives", "[potentials]") {
  const Potential p = strato::make_warped_gaussian(0.05);
  REQUIRE(p.dim == 2);

  // (0, 5) sits on the ridge x2 = 100 b - b x1^2 at its lowest point.
  CHECK(p.value(vec2(0, 5)) == Catch::Approx(0.0).margin(1e-15));
  CHECK(p.gradient(vec2(0, 5)).norm() == Catch::Approx(0.0).margin(1e-15));

  // (10, 0) is also on the ridge, so only the x1^2/100 term survives.
  CHECK(p.value(vec2(10, 0)) == Catch::Approx(1.0).margin(1e-12));

  // b = 0 uncouples the coordinates.
  const Potential flat = strato::make_warped_gaussian(0.0);
  for (double a : {-3.0, 0.5, 7.0})
    for (double c : {-2.0, 0.0, 4.0})
      CHECK(flat.value(vec2(a, c)) ==
            Catch::Approx(a * a / 100.0 + c * c).margin(1e-12));

  CHECK_THROWS_AS(strato::make_warped_gaussian(std::nan("")), ConfigError);
  CHECK_THROWS_AS(strato::make_warped_gaussian(INFINITY), ConfigError);
}

TEST_CASE("unnormalized log density is minus the potential", "[potentials]") {
  const Potential iso = strato::make_quadratic(Matrix::Identity(2, 2));
  CHECK(iso.log_density_unnormalized(vec2(0, 0)) == 0.0);
  CHECK(iso.log_density_unnormalized(vec2(1, 0)) == Catch::Approx(-0.5).margin(1e-15));

  const Potential warped = strato::make_warped_gaussian(0.05);
  CHECK(warped.log_density_unnormalized(vec2(0, 5)) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("derivatives match finite differences at random points", "[potentials]") {
  const Potential quad = strato::make_quadratic(anisotropic());
  const Potential warped = strato::make_warped_gaussian(0.05);
  std::mt19937_64 rng(7321);
  std::normal_distribution<double> n01;

  for (const Potential* p : {&quad, &warped}) {
    for (int k = 0; k < 100; ++k) {
      Vector x(2);
      x << 4.0 * n01(rng), 4.0 * n01(rng);

      const Vector g = p->gradient(x);
      const Vector g_fd = fd_gradient(*p, x, 1e-5);
      CHECK((g - g_fd).norm() <= 1e-5 * std::max(1.0, g.norm()));

      const Matrix h = p->hessian(x);
      const Matrix h_fd = fd_hessian(*p, x, 1e-5);
      CHECK((h - h_fd).cwiseAbs().maxCoeff() <= 1e-4 * std::max(1.0, h.norm()));
      CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

      if (p->quadratic_matrix)
        CHECK((g - *p->quadratic_matrix * x).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("potentials carry distinct identity tokens", "[potentials]") {
  const Potential a = strato::make_quadratic(anisotropic());
  const Potential b = strato::make_quadratic(anisotropic());
  const Potential c = strato::make_warped_gaussian(0.05);
  CHECK(a.id != b.id);
  CHECK(a.id != c.id);
  CHECK(b.id != c.id);
}

TEST_CASE("exact Gaussian sampler matches the target covariance", "[potentials]") {
  Matrix s(2, 2);
  s << 2.0, 0.6, 0.6, 1.0;
  const Potential p = strato::make_quadratic(s);
  const auto sample = strato::make_gaussian_sampler(p);

  std::mt19937_64 rng(2026);
  const int n = 40000;
  Vector mean = Vector::Zero(2);
  Matrix cov = Matrix::Zero(2, 2);
  for (int k = 0; k < n; ++k) {
    const Vector x = sample(rng);
    mean += x;
    cov += x * x.transpose();
  }
  mean /= n;
  cov = cov / n - mean * mean.transpose();

  const Matrix target = s.inverse();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
  CHECK((cov - target).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("exact sampler requires a quadratic potential", "[potentials]") {
  const Potential warped = strato::make_warped_gaussian(0.05);
  CHECK_THROWS_AS(strato::make_gaussian_sampler(warped), ConfigError);
}
