#include "htmpc/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace htmpc {
namespace linalg {

double spectral_radius(const Mat& A) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("spectral_radius: matrix must be square");
  }
  if (A.rows() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_schur(const Mat& A, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("is_schur: tol must be positive");
  return spectral_radius(A) < 1.0 - tol;
}

double spectral_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  return A.jacobiSvd().singularValues().maxCoeff();
}

double min_singular_value(const Mat& A) {
  if (A.size() == 0) return 0.0;
  return A.jacobiSvd().singularValues().minCoeff();
}

Mat solve_dlyap(const Mat& F, const Mat& Q) {
  if (F.rows() != F.cols() || Q.rows() != Q.cols() || F.rows() != Q.rows()) {
    throw std::invalid_argument("solve_dlyap: F and Q must be square of equal size");
  }
  if (!is_schur(F, 1e-12)) {
    throw std::invalid_argument("solve_dlyap: F is not Schur stable");
  }
  // Smith doubling on P = sum_k (F')^k Q F^k; quadratic convergence for
  // Schur-stable F.
  Mat P = 0.5 * (Q + Q.transpose());
  Mat G = F.transpose();
  const double scale = 1.0 + P.norm();
  for (int it = 0; it < 200; ++it) {
    Mat incr = G * P * G.transpose();
    P += incr;
    if (incr.norm() <= 1e-16 * scale) break;
    G = G * G;
  }
  return 0.5 * (P + P.transpose());
}

LqrResult dlqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw std::invalid_argument("dlqr_gain: dimension mismatch");
  }
  constexpr double kTol = 1e-10;
  constexpr int kMaxIter = 10000;
  Mat P = 0.5 * (Q + Q.transpose());
  for (int it = 0; it < kMaxIter; ++it) {
    Mat BtP = B.transpose() * P;
    Mat S = R + BtP * B;
    Mat K = S.ldlt().solve(BtP * A);
    Mat Pn = Q + A.transpose() * P * A - A.transpose() * P * B * K;
    Pn = 0.5 * (Pn + Pn.transpose());
    double delta = (Pn - P).norm();
    P = Pn;
    if (delta <= kTol * (1.0 + P.norm())) {
      Mat Kfin = -S.ldlt().solve(B.transpose() * P * A);
      return {Kfin, P};
    }
  }
  throw std::runtime_error("dlqr_gain: Riccati iteration did not converge");
}

Mat matrix_power_sum(const Mat& A, const Mat& B, int N) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("matrix_power_sum: A must be square");
  }
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("matrix_power_sum: A*B not composable");
  }
  if (N < 1) throw std::invalid_argument("matrix_power_sum: N must be >= 1");
  Mat sum = B;
  Mat term = B;
  for (int j = 1; j < N; ++j) {
    term = A * term;
    sum += term;
  }
  return sum;
}

Mat matrix_power(const Mat& A, int p) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("matrix_power: A must be square");
  }
  if (p < 0) throw std::invalid_argument("matrix_power: exponent must be >= 0");
  Mat result = Mat::Identity(A.rows(), A.cols());
  Mat base = A;
  while (p > 0) {
    if (p & 1) result = result * base;
    p >>= 1;
    if (p > 0) base = base * base;
  }
  return result;
}

int numeric_rank(const Mat& A, double rel_tol) {
  if (A.size() == 0) return 0;
  Vec sv = A.jacobiSvd().singularValues();
  double thresh = rel_tol * sv.maxCoeff();
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++r;
  }
  return r;
}

}  // namespace linalg
}  // namespace htmpc
