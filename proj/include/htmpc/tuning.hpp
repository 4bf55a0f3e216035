#pragma once

#include <limits>
#include <string>
#include <vector>

#include "htmpc/plant.hpp"
#include "htmpc/reduction.hpp"

namespace htmpc {
namespace tuning {

/// Slow period N_L in fast steps, horizon N_H in slow steps, per-subsystem
/// resampling periods zeta_i with N_L = zeta_i * N_i exactly.
struct TimingConfig {
  int N_L = 1;
  int N_H = 1;
  std::vector<int> zeta;
  std::vector<int> N;
};

/// Validates divisibility and positivity; throws std::invalid_argument.
TimingConfig make_timing(int N_L, int N_H, std::vector<int> zeta);

/// Input amplitude split between the layers.
struct Budget {
  Vec rho_delta_u;       // per-subsystem low-level amplitudes
  Vec rho_u_bar;         // per-subsystem high-level amplitudes
  Vec rho_u;             // per-subsystem available amplitudes
  double rho_u_bar_total = 0.0;  // sqrt(sum rho_u_bar_i^2)
  double varrho_u = 0.0;         // sqrt(sum rho_u_i^2)
};

struct MismatchOperators {
  Mat A_mis;     // A_H^{N_L} beta - beta A_L^{N_L}
  Mat B_mis;     // sum A_H^j B_H - beta sum A_L^j B_L, j < N_L
  double kappa;  // ||B_mis||
};

MismatchOperators mismatch_operators(const plant::LargeScaleSystem& sys,
                                     const reduction::ReducedModel& rm, int N_L);

struct ReachProjection {
  Mat H;             // beta_i [B_z, A_z B_z, ..., A_z^{N_i-1} B_z]
  double sigma_min;  // smallest of the rank-many singular values
};

ReachProjection reach_projection(const plant::Subsystem& sub, const Mat& beta_i,
                                 int zeta_i, int N_i);

struct FastStateBounds {
  Mat per_subsystem;  // M x N_L, entry (i, j) bounds ||dxhat_i(j)||
  Vec collective;     // length N_L, sqrt of squared column sums
  double rho_w = 0.0;
};

/// Bounds on the decentralized difference states over one slow period, and
/// the induced high-level disturbance radius rho_w.
FastStateBounds fast_state_bounds(const plant::LargeScaleSystem& sys,
                                  const Mat& beta, const Mat& F_L,
                                  const Vec& rho_delta_u, int N_L);

/// lambda_ij coupling-compensation matrix (M x M, entrywise nonnegative).
Mat lambda_matrix(const plant::LargeScaleSystem& sys,
                  const std::vector<Mat>& K_blocks, const Mat& F_L, int N_L);

struct ChiLambda {
  Vec chi;     // must be <= 1 componentwise
  Vec lambda;  // feasibility radii, +inf when ||A_mis|| = 0
};

/// Throws std::runtime_error when a denominator is nonpositive (the budget
/// fails the strict inequality of the kappa condition).
ChiLambda chi_and_lambda(double kappa, double norm_A_mis, double norm_R_NL,
                         double norm_AL_NL, const Vec& sigma_mins,
                         const std::vector<int>& N, const Budget& budget,
                         int N_L);

struct BudgetInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Maximizes gamma1 * sum(rho_delta_u) - ||rho_u_bar - gamma2 rho_u||^2
/// subject to the strict kappa condition (margin 1e-6 * scale) and
/// (Lambda + I) rho_delta_u + rho_u_bar <= rho_u, all nonnegative.
/// Throws BudgetInfeasible when no split exists (increase N_L).
Budget solve_budget_lp(const Vec& rho_u, const Mat& Lambda, double kappa,
                       const Vec& sigma_mins, const std::vector<int>& N,
                       double gamma1 = 1.0, double gamma2 = 0.3);

struct DeltaUSets {
  Mat rho_Du;              // M x N_L, rho_{Delta u_i}(j); zero for j = 0, 1
  Vec rho_Du_bar;          // rho_{Delta u_i}(N_L - 1)
  double inclusion_margin = 0.0;  // min slack of U_bar x prod DeltaU_bar in U_S
  bool inclusion_ok = false;
};

/// Total low-level correction sets and the input-budget inclusion check. The
/// per-subsystem available sets are balls of radius rho_u_i.
DeltaUSets delta_u_sets(const plant::LargeScaleSystem& sys,
                        const std::vector<Mat>& K_blocks, const Mat& F_L,
                        const Budget& budget, const FastStateBounds& bounds,
                        int N_L);

struct SmallGainResult {
  double kappa_u = 0.0;
  double kappa_bar = 0.0;
  double kappa_x = 0.0;
  double sigma = 0.0;
  double rho_x = 0.0;
  double norm_BC = 0.0;       // ||[A_L^{N_L-1}B_L ... B_L]||
  double norm_mix = 0.0;      // ||A_mis + B_mis K_H beta||
  double series_sum = 0.0;    // sum_k ||(F_L^{[N_L]})^k||
};

/// Small-gain constant sigma(N_L) and the convergence radius rho_x. The
/// norm series is truncated once the geometric tail bound drops below 1e-10;
/// throws std::runtime_error when the cap is exceeded. kappa_bar uses the
/// closed-form equality-constrained term only (the constrained branch of the
/// derivation is non-constructive and omitted; noted in the report).
SmallGainResult small_gain_sigma(const plant::LargeScaleSystem& sys,
                                 const reduction::ReducedModel& rm,
                                 const Mat& K_H, const Mat& F_L_NL,
                                 const std::vector<Mat>& K_blocks,
                                 const Mat& F_L, const Mat& Q_ll,
                                 const Mat& R_ll, const Vec& rho_delta_u,
                                 int N_L);

struct TuningReport {
  TimingConfig timing;
  double kappa = 0.0;
  Mat A_mis;
  Mat B_mis;
  double norm_A_mis = 0.0;
  double norm_AL_NL = 0.0;
  double norm_R_NL = 0.0;
  std::vector<Mat> H;
  Vec sigma_min_H;
  Vec chi;
  Vec lambda_feas;
  Mat Lambda;
  Mat rho_dxhat;
  Vec rho_dxhat_coll;
  Mat rho_Du;
  double rho_w = 0.0;
  double inclusion_margin = 0.0;
  Budget budget;
  bool budget_feasible = false;
  // Filled after controller synthesis.
  double sigma_NL = std::numeric_limits<double>::quiet_NaN();
  double rho_x = std::numeric_limits<double>::quiet_NaN();
  SmallGainResult small_gain;
  bool has_small_gain = false;

  bool item1_norm_pass = false;       // ||A_L^{N_L}|| < 1
  bool item2_rank_pass = false;       // all sigma_min > 0
  bool item3_budget_pass = false;     // strict kappa condition after the LP
  bool item4_chi_pass = false;        // chi_i <= 1
  bool item5_inclusion_pass = false;  // input-budget inclusion
  bool overall_pass = false;
  std::vector<std::string> notes;
};

/// Runs the whole offline pipeline up to (but not including) controller
/// synthesis. K_blocks are the low-level gains; F_L = A_L + B_L diag(K) must
/// be Schur stable.
TuningReport assumption3_report(const plant::LargeScaleSystem& sys,
                                const reduction::ReducedModel& rm,
                                const TimingConfig& timing,
                                const std::vector<Mat>& K_blocks,
                                const Mat& F_L, const Vec& rho_u,
                                double gamma1 = 1.0, double gamma2 = 0.3);

}  // namespace tuning
}  // namespace htmpc
