#include <doctest.h>

#include <random>

#include "htmpc/sets.hpp"
#include "support/test_systems.hpp"

using namespace htmpc;
using namespace htmpc::sets;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

Box interval(double lo, double hi) {
  return Box{v1(lo), v1(hi)};
}

}  // namespace

TEST_CASE("minkowski sums of boxes and balls") {
  Box s = minkowski_sum(interval(-1, 1), interval(-2, 2));
  CHECK(s.lower(0) == doctest::Approx(-3));
  CHECK(s.upper(0) == doctest::Approx(3));

  Box p = minkowski_sum(Box::point(v1(0)), Ball::origin(1, 1.0));
  CHECK(p.lower(0) == doctest::Approx(-1));
  CHECK(p.upper(0) == doctest::Approx(1));

  Box a{Vec(2), Vec(2)}, b{Vec(2), Vec(2)};
  a.lower << -1, 0;
  a.upper << 2, 1;
  b.lower << -1, -1;
  b.upper << 1, 1;
  Box c = minkowski_sum(a, b);
  CHECK(c.lower(0) == doctest::Approx(-2));
  CHECK(c.upper(0) == doctest::Approx(3));
  CHECK(c.lower(1) == doctest::Approx(-1));
  CHECK(c.upper(1) == doctest::Approx(2));
}

TEST_CASE("pontryagin differences") {
  Box d = pontryagin_diff(interval(-2, 2), interval(-1, 1));
  CHECK(d.lower(0) == doctest::Approx(-1));
  CHECK(d.upper(0) == doctest::Approx(1));

  Box db = pontryagin_diff(interval(-2, 2), Ball::origin(1, 1.0));
  CHECK(db.lower(0) == doctest::Approx(-1));
  CHECK(db.upper(0) == doctest::Approx(1));

  CHECK_THROWS_AS(pontryagin_diff(interval(-1, 1), interval(-2, 2)),
                  std::runtime_error);
}

TEST_CASE("shrink then grow stays inside") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> w(0.1, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 4);
    Vec wa(d), wb(d);
    for (int i = 0; i < d; ++i) {
      wa(i) = w(rng) + 1.0;
      wb(i) = w(rng) * 0.4;
    }
    Box A = Box::symmetric(wa);
    Box B = Box::symmetric(wb);
    Box back = minkowski_sum(pontryagin_diff(A, B), B);
    CHECK((back.lower.array() >= A.lower.array() - 1e-12).all());
    CHECK((back.upper.array() <= A.upper.array() + 1e-12).all());
  }
}

TEST_CASE("membership") {
  CHECK(contains(interval(-1, 1), v1(0.0)));
  Vec corner(2);
  corner << 1.0, 1.0;
  CHECK_FALSE(contains(Ball::origin(2, 1.0), corner));
  Ellipsoid e{Vec::Zero(2), Mat::Identity(2, 2), 1.0};
  Vec inside(2);
  inside << 0.6, 0.6;
  CHECK(contains(e, inside));  // quadratic form 0.72
  Vec outside(2);
  outside << 0.8, 0.8;
  CHECK_FALSE(contains(e, outside));
}

TEST_CASE("membership is monotone under sums with a neutral element") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 3);
    Vec wa(d), wb(d);
    for (int i = 0; i < d; ++i) {
      wa(i) = 0.5 + std::abs(u(rng));
      wb(i) = std::abs(u(rng));
    }
    Box A = Box::symmetric(wa);
    Box B = Box::symmetric(wb);  // contains the origin
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = wa(i) * u(rng);
    REQUIRE(contains(A, x));
    CHECK(contains(minkowski_sum(A, B), x));
  }
}

TEST_CASE("mrpi boxes on scalars") {
  Box z0 = mrpi_outer(Mat::Zero(1, 1), Ball::origin(1, 1.0), 0.01);
  CHECK(z0.lower(0) == doctest::Approx(-1.0));
  CHECK(z0.upper(0) == doctest::Approx(1.0));

  Box z = mrpi_outer(Mat::Constant(1, 1, 0.5), interval(-1, 1), 0.01);
  CHECK(z.upper(0) >= 2.0);
  CHECK(z.upper(0) <= 2.02);

  Mat F = Mat::Zero(2, 2);
  F(0, 0) = 0.5;
  F(1, 1) = 0.2;
  Box z2 = mrpi_outer(F, Box::symmetric(Vec::Ones(2)), 0.01);
  CHECK(z2.upper(0) >= 2.0);
  CHECK(z2.upper(0) <= 2.02);
  CHECK(z2.upper(1) >= 1.25);
  CHECK(z2.upper(1) <= 1.2625);
}

TEST_CASE("mrpi invariance on sampled boundary points") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 4);
    // Scale |F| to a spectral radius of at most 0.9 so the box construction
    // converges; the true radius of F is then at most 0.9 as well.
    Mat F = htmpc_test::random_matrix(rng, d, d);
    const double r = linalg::spectral_radius(F.cwiseAbs());
    if (r > 1e-9) F *= (0.3 + 0.6 * (rng() % 100) / 100.0) / r;
    Ball W = Ball::origin(d, 0.1 + std::abs(u(rng)));
    Box Z = mrpi_outer(F, W, 0.01);

    for (int s = 0; s < 200; ++s) {
      Vec z(d);
      for (int i = 0; i < d; ++i) z(i) = Z.upper(i) * u(rng);
      // Project to the boundary along a random face.
      const int face = static_cast<int>(rng() % d);
      z(face) = (rng() % 2 == 0) ? Z.upper(face) : Z.lower(face);
      Vec w(d);
      for (int i = 0; i < d; ++i) w(i) = (rng() % 2 == 0) ? 1.0 : -1.0;
      w *= W.radius / w.norm();  // extreme point of the ball
      CHECK(contains(Z, Vec(F * z + w), 1e-9));
    }
  }
}
