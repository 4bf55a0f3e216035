#pragma once

#include <Eigen/Dense>
#include <utility>

namespace htmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace linalg {

/// Default margin used when classifying a matrix as Schur stable.
inline constexpr double kSchurTol = 1e-9;

/// Largest eigenvalue modulus. Throws std::invalid_argument on non-square input.
double spectral_radius(const Mat& A);

/// True iff spectral_radius(A) < 1 - tol.
bool is_schur(const Mat& A, double tol = kSchurTol);

/// Largest singular value (induced 2-norm).
double spectral_norm(const Mat& A);

/// Smallest of the min(rows, cols) singular values.
double min_singular_value(const Mat& A);

/// Solves F' P F - P = -Q for symmetric P. Requires F Schur stable and Q
/// symmetric PSD; the residual ||F'PF - P + Q|| stays below 1e-9 * (1 + ||Q||).
Mat solve_dlyap(const Mat& F, const Mat& Q);

struct LqrResult {
  Mat K;  // feedback gain, convention u = K x (A + B K Schur)
  Mat P;  // stabilizing Riccati solution
};

/// Discrete-time LQR via fixed-point iteration on the value recursion
/// (tolerance 1e-10, cap 10000 iterations). Throws std::runtime_error if the
/// iteration does not converge.
LqrResult dlqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

/// sum_{j=0}^{N-1} A^j B, N >= 1.
Mat matrix_power_sum(const Mat& A, const Mat& B, int N);

/// A^p for p >= 0.
Mat matrix_power(const Mat& A, int p);

/// Rank with singular values thresholded at rel_tol * sigma_max.
int numeric_rank(const Mat& A, double rel_tol = 1e-10);

}  // namespace linalg
}  // namespace htmpc
