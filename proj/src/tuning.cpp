#include "htmpc/tuning.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>

#include "htmpc/qp.hpp"

namespace htmpc {
namespace tuning {

using linalg::matrix_power;
using linalg::matrix_power_sum;
using linalg::spectral_norm;

TimingConfig make_timing(int N_L, int N_H, std::vector<int> zeta) {
  if (N_L < 1 || N_H < 1) {
    throw std::invalid_argument("make_timing: N_L and N_H must be >= 1");
  }
  TimingConfig t;
  t.N_L = N_L;
  t.N_H = N_H;
  for (int z : zeta) {
    if (z < 1 || N_L % z != 0) {
      throw std::invalid_argument(
          "make_timing: zeta_i must satisfy h = zeta_i l_i = k zeta_i N_i = k N_L "
          "(each zeta_i divides N_L)");
    }
    t.N.push_back(N_L / z);
  }
  t.zeta = std::move(zeta);
  return t;
}

MismatchOperators mismatch_operators(const plant::LargeScaleSystem& sys,
                                     const reduction::ReducedModel& rm,
                                     int N_L) {
  MismatchOperators out;
  out.A_mis = matrix_power(rm.A_H, N_L) * rm.beta -
              rm.beta * matrix_power(sys.A, N_L);
  out.B_mis = matrix_power_sum(rm.A_H, rm.B_H, N_L) -
              rm.beta * matrix_power_sum(sys.A, sys.B, N_L);
  out.kappa = spectral_norm(out.B_mis);
  return out;
}

ReachProjection reach_projection(const plant::Subsystem& sub, const Mat& beta_i,
                                 int zeta_i, int N_i) {
  const Mat A_z = matrix_power(sub.A, zeta_i);
  const Mat B_z = matrix_power_sum(sub.A, sub.B, zeta_i);
  Mat R(sub.n(), N_i * sub.m());
  Mat term = B_z;
  for (int r = 0; r < N_i; ++r) {
    R.block(0, r * sub.m(), sub.n(), sub.m()) = term;
    term = A_z * term;
  }
  ReachProjection out;
  out.H = beta_i * R;
  out.sigma_min = linalg::min_singular_value(out.H);
  return out;
}

FastStateBounds fast_state_bounds(const plant::LargeScaleSystem& sys,
                                  const Mat& beta, const Mat& F_L,
                                  const Vec& rho_delta_u, int N_L) {
  const int M = sys.M();
  FastStateBounds out;
  out.per_subsystem = Mat::Zero(M, N_L);
  for (int i = 0; i < M; ++i) {
    const auto& s = sys.subsystems[i];
    // ||dxhat_i(j)|| <= rho_du_i * sum_{r=1..j} ||A_ii^{j-r} B_ii||.
    double acc = 0.0;
    for (int j = 1; j < N_L; ++j) {
      acc += spectral_norm(matrix_power(s.A, j - 1) * s.B);
      out.per_subsystem(i, j) = rho_delta_u(i) * acc;
    }
  }
  out.collective = Vec::Zero(N_L);
  for (int j = 0; j < N_L; ++j) {
    out.collective(j) = out.per_subsystem.col(j).norm();
  }

  const Mat A_C = sys.A - sys.A_D;
  out.rho_w = 0.0;
  for (int j = 2; j <= N_L; ++j) {
    out.rho_w += spectral_norm(beta * matrix_power(F_L, N_L - j) * A_C) *
                 out.collective(j - 1);
  }
  return out;
}

Mat lambda_matrix(const plant::LargeScaleSystem& sys,
                  const std::vector<Mat>& K_blocks, const Mat& F_L, int N_L) {
  const int M = sys.M();
  Mat Lambda = Mat::Zero(M, M);
  const Mat A_C = sys.A - sys.A_D;
  if (A_C.cwiseAbs().maxCoeff() == 0.0) return Lambda;

  for (int i = 0; i < M; ++i) {
    const Mat sel = sys.state_selector(i);
    // Inner sums over the decentralized input-to-state norms accumulate.
    std::vector<double> inner(M, 0.0);
    for (int r = 2; r <= N_L - 1; ++r) {
      const double outer =
          spectral_norm(K_blocks[i] * sel * matrix_power(F_L, N_L - r - 1) * A_C);
      for (int j = 0; j < M; ++j) {
        const auto& sj = sys.subsystems[j];
        inner[j] += spectral_norm(matrix_power(sj.A, r - 2) * sj.B);
        Lambda(i, j) += outer * inner[j];
      }
    }
  }
  return Lambda;
}

ChiLambda chi_and_lambda(double kappa, double norm_A_mis, double norm_R_NL,
                         double norm_AL_NL, const Vec& sigma_mins,
                         const std::vector<int>& N, const Budget& budget,
                         int N_L) {
  const int M = static_cast<int>(sigma_mins.size());
  if (norm_AL_NL >= 1.0) {
    throw std::runtime_error("chi_and_lambda: ||A_L^{N_L}|| >= 1 (increase N_L)");
  }
  ChiLambda out;
  out.chi = Vec::Zero(M);
  out.lambda = Vec::Zero(M);
  for (int i = 0; i < M; ++i) {
    const double denom = std::sqrt(static_cast<double>(N[i])) * sigma_mins(i) *
                             budget.rho_delta_u(i) -
                         kappa * budget.rho_u_bar_total;
    if (denom <= 0.0) {
      throw std::runtime_error(
          "chi_and_lambda: kappa condition violated for subsystem " +
          std::to_string(i + 1));
    }
    out.chi(i) = std::sqrt(static_cast<double>(N_L)) * budget.varrho_u *
                 norm_R_NL * norm_A_mis / ((1.0 - norm_AL_NL) * denom);
    out.lambda(i) = norm_A_mis > 0.0
                        ? denom / norm_A_mis
                        : std::numeric_limits<double>::infinity();
  }
  return out;
}

Budget solve_budget_lp(const Vec& rho_u, const Mat& Lambda, double kappa,
                       const Vec& sigma_mins, const std::vector<int>& N,
                       double gamma1, double gamma2) {
  const int M = static_cast<int>(rho_u.size());
  if ((rho_u.array() <= 0.0).any()) {
    throw std::invalid_argument("solve_budget_lp: rho_u must be positive");
  }

  // Variables z = (rho_delta_u, rho_u_bar). Maximizing
  //   gamma1 1'rho_delta_u - ||rho_u_bar - gamma2 rho_u||^2
  // is the QP min z'Hz/2 + g'z with H = blkdiag(0, 2I).
  qp::QuadProgram prog;
  prog.H = Mat::Zero(2 * M, 2 * M);
  prog.H.block(M, M, M, M) = 2.0 * Mat::Identity(M, M);
  prog.g = Vec::Zero(2 * M);
  prog.g.head(M).setConstant(-gamma1);
  prog.g.tail(M) = -2.0 * gamma2 * rho_u;

  const double margin = 1e-6 * std::max(1.0, rho_u.maxCoeff());
  // Rows: kappa condition (strict via margin), budget split, nonnegativity.
  const int rows = M + M + 2 * M;
  prog.A_in = Mat::Zero(rows, 2 * M);
  prog.b_in = Vec::Zero(rows);
  for (int i = 0; i < M; ++i) {
    prog.A_in(i, i) = -1.0;
    const double coef = kappa / (std::sqrt(static_cast<double>(N[i])) * sigma_mins(i));
    for (int j = 0; j < M; ++j) prog.A_in(i, M + j) = coef;
    prog.b_in(i) = -margin;
  }
  prog.A_in.block(M, 0, M, M) = Lambda + Mat::Identity(M, M);
  prog.A_in.block(M, M, M, M) = Mat::Identity(M, M);
  prog.b_in.segment(M, M) = rho_u;
  prog.A_in.block(2 * M, 0, 2 * M, 2 * M) = -Mat::Identity(2 * M, 2 * M);

  qp::Result res = qp::solve(prog, 1e-9);
  if (res.status != qp::SolveStatus::Optimal) {
    throw BudgetInfeasible(
        "solve_budget_lp: no feasible input split (kappa too large for the "
        "available input amplitude; increase N_L)");
  }

  Budget out;
  out.rho_delta_u = res.x.head(M).cwiseMax(0.0);
  out.rho_u_bar = res.x.tail(M).cwiseMax(0.0);
  out.rho_u = rho_u;
  out.rho_u_bar_total = out.rho_u_bar.norm();
  out.varrho_u = rho_u.norm();
  return out;
}

DeltaUSets delta_u_sets(const plant::LargeScaleSystem& sys,
                        const std::vector<Mat>& K_blocks, const Mat& F_L,
                        const Budget& budget, const FastStateBounds& bounds,
                        int N_L) {
  const int M = sys.M();
  DeltaUSets out;
  out.rho_Du = Mat::Zero(M, N_L);
  const Mat A_C = sys.A - sys.A_D;
  const bool coupled = A_C.cwiseAbs().maxCoeff() > 0.0;

  for (int i = 0; i < M && coupled; ++i) {
    const Mat sel = sys.state_selector(i);
    for (int j = 2; j < N_L; ++j) {
      double sum = 0.0;
      for (int r = 2; r <= j; ++r) {
        sum += spectral_norm(K_blocks[i] * sel * matrix_power(F_L, j - r) * A_C) *
               bounds.collective(r - 1);
      }
      out.rho_Du(i, j) = sum;
    }
  }
  out.rho_Du_bar = out.rho_Du.col(N_L - 1);

  // U_bar_{S,i} + DeltaU_bar_i must fit in U_{S,i} = Ball(rho_u_i); the two
  // layer sets are balls of radius rho_u_bar_i and rho_delta_u_i + rho_Du_bar_i.
  out.inclusion_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < M; ++i) {
    const double used =
        budget.rho_u_bar(i) + budget.rho_delta_u(i) + out.rho_Du_bar(i);
    out.inclusion_margin =
        std::min(out.inclusion_margin, budget.rho_u(i) - used);
  }
  out.inclusion_ok = out.inclusion_margin >= -1e-9;
  return out;
}

namespace {

// sum_{k>=0} ||F^k|| truncated once the geometric tail bound is below 1e-10.
double powered_norm_series(const Mat& F) {
  constexpr int kCap = 200000;
  constexpr double kTail = 1e-10;
  double sum = 0.0;
  Mat P = Mat::Identity(F.rows(), F.cols());
  int contraction_k = -1;
  double contraction = 1.0;
  std::vector<double> window;
  for (int k = 0; k < kCap; ++k) {
    const double t = spectral_norm(P);
    sum += t;
    if (contraction_k < 0) {
      if (t < 1.0 && k > 0) {
        contraction_k = k;
        contraction = t;
      }
    } else {
      window.push_back(t);
      if (static_cast<int>(window.size()) > contraction_k) {
        window.erase(window.begin());
      }
      if (static_cast<int>(window.size()) == contraction_k) {
        double w = 0.0;
        for (double v : window) w += v;
        // tail <= contraction * (window + tail) for blocks of length k*.
        const double tail = contraction * w / (1.0 - contraction);
        if (tail < kTail) return sum + tail;
      }
    }
    P = P * F;
  }
  throw std::runtime_error("powered_norm_series: truncation cap exceeded");
}

}  // namespace

SmallGainResult small_gain_sigma(const plant::LargeScaleSystem& sys,
                                 const reduction::ReducedModel& rm,
                                 const Mat& K_H, const Mat& F_L_NL,
                                 const std::vector<Mat>& K_blocks,
                                 const Mat& F_L, const Mat& Q_ll,
                                 const Mat& R_ll, const Vec& rho_delta_u,
                                 int N_L) {
  const int n = sys.n();
  const int m = sys.m();
  const Mat A_C = sys.A - sys.A_D;

  // Stacked operators over one slow period (fast-rate indexing 0..N_L-1).
  Mat F_stack = Mat::Zero(N_L * n, N_L * n);
  for (int r = 1; r < N_L; ++r) {
    for (int c = 0; c < r; ++c) {
      F_stack.block(r * n, c * n, n, n) = matrix_power(F_L, r - 1 - c);
    }
  }
  Mat B_stack = Mat::Zero(N_L * n, N_L * m);
  for (int r = 1; r < N_L; ++r) {
    for (int c = 0; c < r; ++c) {
      B_stack.block(r * n, c * m, n, m) =
          matrix_power(sys.A_D, r - 1 - c) * sys.B;
    }
  }
  Mat K_coll = Mat::Zero(m, n);
  {
    int ro = 0, co = 0;
    for (int i = 0; i < sys.M(); ++i) {
      K_coll.block(ro, co, K_blocks[i].rows(), K_blocks[i].cols()) = K_blocks[i];
      ro += static_cast<int>(K_blocks[i].rows());
      co += static_cast<int>(K_blocks[i].cols());
    }
  }
  Mat K_stack = Mat::Zero(N_L * m, N_L * n);
  Mat AC_stack = Mat::Zero(N_L * n, N_L * n);
  for (int r = 0; r < N_L; ++r) {
    K_stack.block(r * m, r * n, m, n) = K_coll;
    AC_stack.block(r * n, r * n, n, n) = A_C;
  }

  const Mat mix = Mat::Identity(N_L * m, N_L * m) +
                  K_stack * F_stack * AC_stack * B_stack;

  SmallGainResult out;
  out.kappa_u = spectral_norm(mix);

  // kappa_bar from the equality-constrained KKT system of the low-level
  // problem recast over the full slow period.
  Mat Q_stack = Mat::Zero(N_L * m, N_L * m);
  for (int r = 0; r < N_L; ++r) {
    Q_stack.block(r * m, r * m, m, m) = R_ll;
  }
  Mat QB = Mat::Zero(N_L * n, N_L * n);
  for (int r = 0; r < N_L; ++r) QB.block(r * n, r * n, n, n) = Q_ll;
  Q_stack += B_stack.transpose() * QB * B_stack;

  Mat RD(n, N_L * m);
  for (int c = 0; c < N_L; ++c) {
    RD.block(0, c * m, n, m) = matrix_power(sys.A_D, N_L - 1 - c) * sys.B;
  }
  const Mat bRD = rm.beta * RD;
  const int nb = rm.n_bar();
  Mat kkt = Mat::Zero(N_L * m + nb, N_L * m + nb);
  kkt.topLeftCorner(N_L * m, N_L * m) = 2.0 * Q_stack;
  kkt.topRightCorner(N_L * m, nb) = bRD.transpose();
  kkt.bottomLeftCorner(nb, N_L * m) = bRD;
  Eigen::FullPivLU<Mat> lu(kkt);
  if (!lu.isInvertible()) {
    throw std::runtime_error("small_gain_sigma: singular low-level KKT system");
  }
  Mat rhs = Mat::Zero(N_L * m + nb, nb);
  rhs.bottomRows(nb).setIdentity();
  out.kappa_bar = spectral_norm((lu.solve(rhs)).topRows(N_L * m));

  Mat BC(n, N_L * m);
  for (int c = 0; c < N_L; ++c) {
    BC.block(0, c * m, n, m) = matrix_power(sys.A, N_L - 1 - c) * sys.B;
  }
  out.norm_BC = spectral_norm(BC);

  MismatchOperators mo = mismatch_operators(sys, rm, N_L);
  out.norm_mix = spectral_norm(mo.A_mis + mo.B_mis * K_H * rm.beta);
  out.kappa_x = out.kappa_u * out.kappa_bar * out.norm_BC * out.norm_mix;

  out.series_sum = powered_norm_series(F_L_NL);
  out.sigma = out.kappa_x * out.series_sum;

  const double kappa_du = spectral_norm(BC * mix);
  out.rho_x = kappa_du * std::sqrt(static_cast<double>(N_L)) * rho_delta_u.norm();
  return out;
}

TuningReport assumption3_report(const plant::LargeScaleSystem& sys,
                                const reduction::ReducedModel& rm,
                                const TimingConfig& timing,
                                const std::vector<Mat>& K_blocks,
                                const Mat& F_L, const Vec& rho_u,
                                double gamma1, double gamma2) {
  TuningReport rep;
  rep.timing = timing;
  const int M = sys.M();
  const int N_L = timing.N_L;

  MismatchOperators mo = mismatch_operators(sys, rm, N_L);
  rep.kappa = mo.kappa;
  rep.A_mis = mo.A_mis;
  rep.B_mis = mo.B_mis;
  rep.norm_A_mis = spectral_norm(mo.A_mis);

  rep.norm_AL_NL = spectral_norm(matrix_power(sys.A, N_L));
  rep.item1_norm_pass = rep.norm_AL_NL < 1.0;

  rep.sigma_min_H = Vec::Zero(M);
  for (int i = 0; i < M; ++i) {
    ReachProjection rp = reach_projection(sys.subsystems[i], rm.beta_blocks[i],
                                          timing.zeta[i], timing.N[i]);
    rep.H.push_back(rp.H);
    rep.sigma_min_H(i) = rp.sigma_min;
  }
  rep.item2_rank_pass = (rep.sigma_min_H.array() > 1e-12).all();

  Mat R_NL(sys.n(), N_L * sys.m());
  {
    Mat term = sys.B;
    for (int r = 0; r < N_L; ++r) {
      R_NL.block(0, r * sys.m(), sys.n(), sys.m()) = term;
      term = sys.A * term;
    }
  }
  rep.norm_R_NL = spectral_norm(R_NL);

  rep.Lambda = lambda_matrix(sys, K_blocks, F_L, N_L);

  try {
    rep.budget = solve_budget_lp(rho_u, rep.Lambda, rep.kappa, rep.sigma_min_H,
                                 timing.N, gamma1, gamma2);
    rep.budget_feasible = true;
  } catch (const BudgetInfeasible& e) {
    rep.notes.push_back(e.what());
    rep.budget_feasible = false;
  }

  if (rep.budget_feasible) {
    // Strict per-subsystem kappa condition re-checked on the LP output.
    rep.item3_budget_pass = true;
    for (int i = 0; i < M; ++i) {
      const double lhs = rep.budget.rho_delta_u(i);
      const double rhs = rep.kappa * rep.budget.rho_u_bar_total /
                         (std::sqrt(static_cast<double>(timing.N[i])) *
                          rep.sigma_min_H(i));
      if (!(lhs > rhs)) rep.item3_budget_pass = false;
    }

    FastStateBounds fb =
        fast_state_bounds(sys, rm.beta, F_L, rep.budget.rho_delta_u, N_L);
    rep.rho_dxhat = fb.per_subsystem;
    rep.rho_dxhat_coll = fb.collective;
    rep.rho_w = fb.rho_w;

    DeltaUSets du = delta_u_sets(sys, K_blocks, F_L, rep.budget, fb, N_L);
    rep.rho_Du = du.rho_Du;
    rep.inclusion_margin = du.inclusion_margin;
    rep.item5_inclusion_pass = du.inclusion_ok;

    if (rep.item1_norm_pass && rep.item3_budget_pass) {
      ChiLambda cl =
          chi_and_lambda(rep.kappa, rep.norm_A_mis, rep.norm_R_NL,
                         rep.norm_AL_NL, rep.sigma_min_H, timing.N, rep.budget,
                         N_L);
      rep.chi = cl.chi;
      rep.lambda_feas = cl.lambda;
      rep.item4_chi_pass = (rep.chi.array() <= 1.0).all();
    }
  }

  rep.notes.push_back(
      "delta-u sets realized as per-coordinate boxes of half width "
      "rho_delta_u_i/sqrt(m_i), inscribed in the nominal ball; the ball "
      "containment required by the kappa condition is checked against the "
      "inscribed-box convention");
  rep.notes.push_back(
      "sigma(N_L) uses the equality-constrained closed-form term for "
      "kappa_bar; the non-constructive constrained branch is omitted");

  rep.overall_pass = rep.item1_norm_pass && rep.item2_rank_pass &&
                     rep.item3_budget_pass && rep.item4_chi_pass &&
                     rep.item5_inclusion_pass;
  return rep;
}

}  // namespace tuning
}  // namespace htmpc
