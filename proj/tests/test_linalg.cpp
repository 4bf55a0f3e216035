#include <doctest.h>

#include <random>

#include "htmpc/linalg.hpp"
#include "support/test_systems.hpp"

using namespace htmpc;
using namespace htmpc::linalg;

TEST_CASE("spectral radius") {
  CHECK(spectral_radius(Mat::Identity(2, 2)) == doctest::Approx(1.0));
  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 0.5;
  diag(1, 1) = 0.2;
  CHECK(spectral_radius(diag) == doctest::Approx(0.5));
  Mat coupled(2, 2);
  coupled << 0.5, 0.1, 0.1, 0.5;
  CHECK(spectral_radius(coupled) == doctest::Approx(0.6));
  CHECK_THROWS_AS(spectral_radius(Mat::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("schur classification") {
  Mat a = Mat::Constant(1, 1, 0.9);
  CHECK(is_schur(a));
  CHECK_FALSE(is_schur(Mat::Identity(3, 3)));
  Mat coupled(2, 2);
  coupled << 0.5, 0.1, 0.1, 0.5;
  CHECK(is_schur(coupled));
}

TEST_CASE("spectral norm and minimum singular value") {
  CHECK(spectral_norm(Mat::Zero(3, 3)) == doctest::Approx(0.0));
  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 2.0;
  diag(1, 1) = 0.5;
  CHECK(spectral_norm(diag) == doctest::Approx(2.0));
  Mat nilpotent(2, 2);
  nilpotent << 0, 1, 0, 0;
  CHECK(spectral_norm(nilpotent) == doctest::Approx(1.0));

  CHECK(min_singular_value(Mat::Identity(3, 3)) == doctest::Approx(1.0));
  Mat fat(1, 2);
  fat << 1.0, 0.5;
  CHECK(min_singular_value(fat) == doctest::Approx(std::sqrt(1.25)));
  Mat deficient = Mat::Zero(2, 2);
  deficient(0, 0) = 1.0;
  CHECK(min_singular_value(deficient) == doctest::Approx(0.0));
}

TEST_CASE("discrete Lyapunov solutions") {
  Mat F = Mat::Zero(1, 1);
  Mat Q = Mat::Constant(1, 1, 3.0);
  CHECK(solve_dlyap(F, Q)(0, 0) == doctest::Approx(3.0));

  F = Mat::Constant(1, 1, 0.5);
  Q = Mat::Constant(1, 1, 1.0);
  CHECK(solve_dlyap(F, Q)(0, 0) == doctest::Approx(4.0 / 3.0));

  Mat F2 = Mat::Zero(2, 2);
  F2(0, 0) = 0.5;
  F2(1, 1) = 0.2;
  Mat P = solve_dlyap(F2, Mat::Identity(2, 2));
  CHECK(P(0, 0) == doctest::Approx(4.0 / 3.0));
  CHECK(P(1, 1) == doctest::Approx(25.0 / 24.0));
  CHECK(P(0, 1) == doctest::Approx(0.0));

  CHECK_THROWS(solve_dlyap(Mat::Identity(2, 2), Mat::Identity(2, 2)));
}

TEST_CASE("Lyapunov residual on random Schur matrices") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    Mat F = htmpc_test::random_stable(rng, n, 0.95 * (0.2 + 0.8 * (rng() % 100) / 100.0));
    Mat G = htmpc_test::random_matrix(rng, n, n);
    Mat Q = G * G.transpose();
    Mat P = solve_dlyap(F, Q);
    const double resid = (F.transpose() * P * F - P + Q).norm();
    CHECK(resid <= 1e-9 * (1.0 + Q.norm()));
  }
}

TEST_CASE("LQR gains") {
  Mat A = Mat::Constant(1, 1, 0.5), B = Mat::Constant(1, 1, 1.0);
  Mat Q = Mat::Identity(1, 1), R = Mat::Identity(1, 1);
  auto res = dlqr_gain(A, B, Q, R);
  // Scalar Riccati closed form: P^2 - 0.25 P - 1 = 0.
  const double P_exact = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
  CHECK(res.P(0, 0) == doctest::Approx(P_exact).epsilon(1e-9));
  CHECK(res.P(0, 0) == doctest::Approx(1.1328).epsilon(1e-3));
  CHECK(res.K(0, 0) == doctest::Approx(-0.2656).epsilon(1e-3));

  auto no_input = dlqr_gain(A, Mat::Zero(1, 1), Q, R);
  CHECK(no_input.K(0, 0) == doctest::Approx(0.0));
  CHECK(no_input.P(0, 0) == doctest::Approx(4.0 / 3.0));

  auto deadbeat = dlqr_gain(Mat::Zero(1, 1), B, Q, R);
  CHECK(deadbeat.K(0, 0) == doctest::Approx(0.0));
  CHECK(deadbeat.P(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("LQR stabilizes random systems") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int m = 1 + static_cast<int>(rng() % 2);
    Mat A = htmpc_test::random_matrix(rng, n, n);  // possibly unstable
    Mat B = htmpc_test::random_matrix(rng, n, m);
    if (linalg::numeric_rank(B) < std::min(n, m)) continue;
    Mat Q = Mat::Identity(n, n);
    Mat R = Mat::Identity(m, m);
    linalg::LqrResult res;
    try {
      res = dlqr_gain(A, B, Q, R);
    } catch (const std::runtime_error&) {
      continue;  // not stabilizable draw
    }
    CHECK(spectral_radius(A + B * res.K) < 1.0);
  }
}

TEST_CASE("powered input sums") {
  Mat A = Mat::Constant(1, 1, 0.5), B = Mat::Constant(1, 1, 1.0);
  CHECK(matrix_power_sum(A, B, 1)(0, 0) == doctest::Approx(1.0));
  CHECK(matrix_power_sum(A, B, 2)(0, 0) == doctest::Approx(1.5));
  CHECK(matrix_power_sum(A, B, 4)(0, 0) == doctest::Approx(1.875));

  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    Mat Ar = htmpc_test::random_matrix(rng, n, n);
    Mat Br = htmpc_test::random_matrix(rng, n, 2);
    for (int N = 2; N <= 5; ++N) {
      Mat lhs = matrix_power_sum(Ar, Br, N);
      Mat rhs = Br + Ar * matrix_power_sum(Ar, Br, N - 1);
      CHECK((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }
  }
}

TEST_CASE("minimum singular value never exceeds the spectral norm") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    Mat A = htmpc_test::random_matrix(rng, 1 + rng() % 5, 1 + rng() % 5);
    CHECK(min_singular_value(A) <= spectral_norm(A) + 1e-12);
  }
}
