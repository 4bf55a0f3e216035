#include "htmpc/reduction.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <stdexcept>

namespace htmpc {
namespace reduction {

namespace {

// Orthonormal basis of the column space, singular values above rel_tol.
Mat range_basis(const Mat& A, double rel_tol = 1e-10) {
  if (A.size() == 0) return Mat(A.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU);
  const Vec sv = svd.singularValues();
  const double thresh = rel_tol * std::max(1e-300, sv.maxCoeff());
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++r;
  }
  return svd.matrixU().leftCols(r);
}

// Orthonormal basis of Ker A (right null space).
Mat null_basis(const Mat& A, int cols, double rel_tol = 1e-10) {
  if (A.rows() == 0) return Mat::Identity(cols, cols);
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Vec sv = svd.singularValues();
  const double thresh = rel_tol * std::max(1e-300, sv.size() ? sv.maxCoeff() : 0.0);
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++r;
  }
  return svd.matrixV().rightCols(cols - r);
}

// Orthonormal basis of span(U) intersect span(V); U, V orthonormal.
Mat subspace_intersection(const Mat& U, const Mat& V) {
  if (U.cols() == 0 || V.cols() == 0) return Mat(U.rows(), 0);
  // Kernel of [U, -V] gives pairs (a, b) with U a = V b.
  Mat stacked(U.rows(), U.cols() + V.cols());
  stacked << U, -V;
  Mat ker = null_basis(stacked, static_cast<int>(stacked.cols()));
  if (ker.cols() == 0) return Mat(U.rows(), 0);
  return range_basis(U * ker.topRows(U.cols()));
}

}  // namespace

int ReducedModel::reduced_offset(int i) const {
  int off = 0;
  for (int k = 0; k < i; ++k) off += static_cast<int>(beta_blocks[k].rows());
  return off;
}

Mat ReducedModel::reduced_selector(int i) const {
  const int ni = static_cast<int>(beta_blocks[i].rows());
  Mat sel = Mat::Zero(ni, n_bar());
  sel.block(0, reduced_offset(i), ni, ni).setIdentity();
  return sel;
}

Mat build_beta(const plant::Subsystem& sub, int n_bar_i, bool b_only) {
  const int n = sub.n();
  if (n_bar_i > n) throw std::invalid_argument("build_beta: n_bar_i > n_i");
  if (n_bar_i < sub.p()) {
    throw std::invalid_argument(
        "build_beta: n_bar_i < p_i makes C_H beta = C_L unsolvable");
  }
  const int q = n - n_bar_i;  // kernel dimension
  if (q == 0) return Mat::Identity(n, n);

  // Ker C_ii.
  Mat kerC = null_basis(sub.C, n);
  if (kerC.cols() < q) {
    throw std::invalid_argument(
        "build_beta: Ker C too small for the requested kernel dimension");
  }

  // Z_ii = Im G~(1) intersect Ker C, with G~(1) = (I - A)^{-1} [B E].
  Eigen::FullPivLU<Mat> lu(Mat::Identity(n, n) - sub.A);
  if (!lu.isInvertible()) {
    throw std::runtime_error("build_beta: I - A_ii singular");
  }
  Mat cols = b_only || sub.E.size() == 0
                 ? sub.B
                 : [&] {
                     Mat be(n, sub.m() + sub.p_s());
                     be << sub.B, sub.E;
                     return be;
                   }();
  Mat G1 = lu.solve(cols);
  Mat Z = subspace_intersection(range_basis(G1), kerC);

  // Inside Ker C (coordinates via kerC), pick q directions orthogonal to Z.
  Mat Zc = kerC.transpose() * Z;  // Z expressed in kerC coordinates
  Mat avoid = null_basis(Zc.transpose(), static_cast<int>(kerC.cols()));
  if (avoid.cols() < q) {
    throw std::invalid_argument(
        "build_beta: no admissible kernel of the requested dimension "
        "(dimension count violated)");
  }
  Mat kernel = kerC * avoid.leftCols(q);  // n x q, orthonormal

  // Basis completion: columns orthogonal to the kernel, beta = V'.
  Mat V = null_basis(kernel.transpose(), n);
  return V.transpose();
}

bool kernel_transversality_ok(const plant::LargeScaleSystem& sys,
                              const std::vector<Mat>& betas) {
  const int n = sys.n();
  Eigen::FullPivLU<Mat> lu(Mat::Identity(n, n) - sys.A);
  if (!lu.isInvertible()) return false;
  Mat Gx = lu.solve(sys.B);
  Mat Z = subspace_intersection(range_basis(Gx), null_basis(sys.C, n));
  if (Z.cols() == 0) return true;

  // K_beta = prod Ker beta_i, assembled block diagonally.
  std::vector<Mat> kers;
  int total = 0;
  for (size_t i = 0; i < betas.size(); ++i) {
    Mat k = null_basis(betas[i], static_cast<int>(betas[i].cols()));
    total += static_cast<int>(k.cols());
    kers.push_back(std::move(k));
  }
  if (total == 0) return true;
  Mat Kb = Mat::Zero(n, total);
  int ro = 0, co = 0;
  for (size_t i = 0; i < betas.size(); ++i) {
    Kb.block(ro, co, kers[i].rows(), kers[i].cols()) = kers[i];
    ro += static_cast<int>(betas[i].cols());
    co += static_cast<int>(kers[i].cols());
  }
  return subspace_intersection(Z, range_basis(Kb)).cols() == 0;
}

ReducedModel build_reduced_model(const plant::LargeScaleSystem& sys,
                                 const std::vector<Mat>& betas, const Mat& A_H) {
  if (static_cast<int>(betas.size()) != sys.M()) {
    throw std::invalid_argument("build_reduced_model: one beta per subsystem");
  }
  if (!linalg::is_schur(A_H)) {
    throw std::invalid_argument("build_reduced_model: A_H must be Schur stable");
  }
  int n_bar = 0;
  for (int i = 0; i < sys.M(); ++i) {
    if (betas[i].cols() != sys.subsystems[i].n()) {
      throw std::invalid_argument("build_reduced_model: beta column mismatch");
    }
    n_bar += static_cast<int>(betas[i].rows());
  }
  if (A_H.rows() != n_bar) {
    throw std::invalid_argument("build_reduced_model: A_H size mismatch");
  }

  ReducedModel rm;
  rm.beta_blocks = betas;
  rm.A_H = A_H;
  rm.beta = Mat::Zero(n_bar, sys.n());
  int ro = 0, co = 0;
  for (int i = 0; i < sys.M(); ++i) {
    rm.beta.block(ro, co, betas[i].rows(), betas[i].cols()) = betas[i];
    ro += static_cast<int>(betas[i].rows());
    co += static_cast<int>(betas[i].cols());
  }

  Eigen::FullPivLU<Mat> lu(Mat::Identity(sys.n(), sys.n()) - sys.A);
  if (!lu.isInvertible()) {
    throw std::runtime_error("build_reduced_model: I - A_L singular");
  }
  Mat G_hat = rm.beta * lu.solve(sys.B);  // steady-state gain to match
  rm.B_H = (Mat::Identity(n_bar, n_bar) - A_H) * G_hat;

  rm.C_H = Mat::Zero(sys.p(), n_bar);
  int po = 0;
  ro = 0;
  for (int i = 0; i < sys.M(); ++i) {
    const auto& s = sys.subsystems[i];
    const Mat& bi = betas[i];
    // C_H^{ii} beta_i = C_L^{ii}: least squares via beta_i's right inverse,
    // exact because Ker beta_i lies inside Ker C_L^{ii}.
    Mat bbT = bi * bi.transpose();
    Mat Chi = s.C * bi.transpose() * bbT.ldlt().solve(
                                         Mat::Identity(bi.rows(), bi.rows()));
    rm.C_H_blocks.push_back(Chi);
    rm.C_H.block(po, ro, s.p(), bi.rows()) = Chi;
    po += s.p();
    ro += static_cast<int>(bi.rows());
  }
  return rm;
}

Vec reachability_decay_heuristic(const plant::LargeScaleSystem& sys,
                                 const std::vector<int>& n_bar) {
  std::vector<double> vals;
  for (int i = 0; i < sys.M(); ++i) {
    const auto& s = sys.subsystems[i];
    Mat reach(s.n(), s.n() * s.m());
    Mat term = s.B;
    for (int k = 0; k < s.n(); ++k) {
      reach.block(0, k * s.m(), s.n(), s.m()) = term;
      term = s.A * term;
    }
    Vec sv = reach.jacobiSvd().singularValues();
    for (int k = 0; k < n_bar[i]; ++k) vals.push_back(sv(k));
  }
  return Eigen::Map<Vec>(vals.data(), static_cast<int>(vals.size()));
}

bool Assumption2Report::all_pass() const {
  for (const auto& it : items) {
    if (!it.pass) return false;
  }
  return true;
}

Assumption2Report validate_assumption2(const ReducedModel& rm,
                                       const plant::LargeScaleSystem& sys) {
  Assumption2Report rep;

  const double rho = linalg::spectral_radius(rm.A_H);
  rep.items.push_back({"A_H Schur stable", rho < 1.0 - linalg::kSchurTol, rho});

  bool full_rank = true;
  for (const auto& b : rm.beta_blocks) {
    if (linalg::numeric_rank(b) != b.rows()) full_rank = false;
  }
  rep.items.push_back({"beta_i full row rank", full_rank, full_rank ? 1.0 : 0.0});

  const double c_res = (rm.C_H * rm.beta - sys.C).cwiseAbs().maxCoeff();
  rep.items.push_back({"C_H beta = C_L", c_res <= 1e-9, c_res});

  const int n = sys.n();
  Eigen::FullPivLU<Mat> lu(Mat::Identity(n, n) - sys.A);
  Mat G_hat = rm.beta * lu.solve(sys.B);
  Eigen::FullPivLU<Mat> luH(Mat::Identity(rm.n_bar(), rm.n_bar()) - rm.A_H);
  Mat G_H = luH.solve(rm.B_H);
  const double g_res = (G_hat - G_H).cwiseAbs().maxCoeff();
  rep.items.push_back({"G_L_hat(1) = G_H(1)", g_res <= 1e-8, g_res});

  const double smin = linalg::min_singular_value(G_H);
  rep.items.push_back({"G_H(1) full rank", smin > 1e-9, smin});

  return rep;
}

}  // namespace reduction
}  // namespace htmpc
