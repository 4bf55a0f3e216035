#pragma once

#include <vector>

#include "htmpc/plant.hpp"
#include "htmpc/qp.hpp"
#include "htmpc/reduction.hpp"
#include "htmpc/sets.hpp"
#include "htmpc/tuning.hpp"

namespace htmpc {
namespace ll {

/// Decentralized gains; computed before the input budget exists because the
/// tuning constants need F_L.
struct GainSet {
  std::vector<Mat> K_blocks;  // K_i, u_i = K_i x_i convention
  Mat K;                      // block diagonal
  Mat F_L;                    // A_L + B_L K, Schur stable
};

/// Per-subsystem LQ gains followed by the mandatory collective Schur check on
/// F_L. Throws std::runtime_error when the coupled closed loop is unstable.
GainSet design_gains(const plant::LargeScaleSystem& sys,
                     const std::vector<Mat>& Q_lq, const std::vector<Mat>& R_lq);

struct SubsystemDesign {
  Mat K;              // local ancillary gain
  Mat A_zeta;         // (A_ii)^{zeta_i}
  Mat B_zeta;         // sum_{j<zeta_i} A_ii^j B_ii
  Mat beta;           // projection onto the reduced block
  Mat Q;              // stage state weight (resampled difference state)
  Mat R;              // stage input weight
  sets::Box du_box;   // admissible per-slot correction, +-rho/sqrt(m_i)
  int zeta = 1;
  int N = 1;
};

struct LLDesign {
  std::vector<SubsystemDesign> sub;
  Mat K;    // collective gain
  Mat F_L;  // collective closed loop
  int N_L = 1;
};

/// Binds the gains to the budget and the resampled models.
LLDesign finalize_design(const plant::LargeScaleSystem& sys,
                         const reduction::ReducedModel& rm,
                         const tuning::TimingConfig& timing,
                         const GainSet& gains, const tuning::Budget& budget,
                         const std::vector<Mat>& Q_ll,
                         const std::vector<Mat>& R_ll);

/// Coupled auxiliary rollout under the constant high-level input: N_L + 1
/// collective states starting from x(kN_L).
std::vector<Vec> simulate_hat(const plant::LargeScaleSystem& sys, const Vec& x,
                              const Vec& u_bar, int N_L);

/// Per-subsystem terminal targets: block i of the high-level one-step
/// prediction minus beta_i x_hat_i((k+1)N_L).
std::vector<Vec> terminal_rhs(const plant::LargeScaleSystem& sys,
                              const reduction::ReducedModel& rm,
                              const Vec& prediction, const Vec& x_hat_end);

struct LLSolveResult {
  std::vector<Vec> du_hat;  // N_i slots, each m_i
  bool feasible = false;
  qp::SolveStatus status = qp::SolveStatus::MaxIter;
};

/// Minimum-effort correction hitting the terminal equality
/// beta_i dxhat_i^{[zeta_i]}(N_i) = rhs_i under the per-slot box.
LLSolveResult ll_solve(const LLDesign& design, int i, const Vec& rhs_i,
                       double tol = 1e-8);

struct LLSlowStepPlan {
  std::vector<std::vector<Vec>> du_hat;     // per subsystem, N_i slots
  std::vector<std::vector<Vec>> dxhat;      // per subsystem, fast rate, N_L+1
  std::vector<Vec> xhat;                    // collective, N_L+1
  bool feasible = false;
  double terminal_residual = 0.0;  // max_i ||beta_i dxhat_i(N_L) - rhs_i||
};

/// Solves all M subproblems and precomputes the fast-rate difference-state
/// trajectories needed by the ancillary feedback.
LLSlowStepPlan plan_slow_step(const plant::LargeScaleSystem& sys,
                              const reduction::ReducedModel& rm,
                              const LLDesign& design, const Vec& x,
                              const Vec& u_bar, const Vec& prediction);

/// delta u_i at fast offset j of the slow step: the piecewise-constant plan
/// input plus K_i times the coupling-induced state mismatch.
Vec reconstruct_fast(const LLDesign& design, const LLSlowStepPlan& plan, int i,
                     int j, const Vec& dx_i);

}  // namespace ll
}  // namespace htmpc
