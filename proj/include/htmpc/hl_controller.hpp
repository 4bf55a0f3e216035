#pragma once

#include <optional>
#include <string>
#include <vector>

#include "htmpc/plant.hpp"
#include "htmpc/reduction.hpp"
#include "htmpc/sets.hpp"
#include "htmpc/tuning.hpp"

namespace htmpc {
namespace hl {

struct HLDesign {
  Mat A_H_NL;   // A_H^{N_L}
  Mat B_H_NL;   // resampled reduced input matrix
  Mat B_L_NL;   // resampled plant input matrix
  Mat K_H;      // tube ancillary gain
  Mat F_H;      // A_H_NL + B_H_NL K_H
  Mat F_L_NL;   // A_L^{N_L} + B_L_NL K_H beta
  Mat P_H;      // terminal weight from the Lyapunov equation
  Mat Q_H, R_H;
  sets::Box Z;          // robust invariant error set
  sets::Ball W;         // disturbance ball of radius rho_w
  sets::Ellipsoid X_F;  // terminal set, centered at x_bar_S
  sets::Box U_tight;    // tightened input set, centered at u_bar_S
  sets::Box U_tight0;   // same set centered at the origin
  Vec x_bar_S;
  Vec u_bar_S;
  Vec x_S;
  Mat beta;
  int N_H = 1;
};

struct HLState {
  Vec x_bar_nom;               // optimal nominal initial state
  std::vector<Vec> u_nom_seq;  // optimal nominal inputs over the horizon
  Vec last_prediction;         // one-step prediction from the reset state
  bool feasible = false;
};

struct SynthesisOptions {
  Mat Q_H;   // stage state weight (defaults to identity)
  Mat R_H;   // stage input weight (defaults to 0.1 identity)
  Mat lq_Q;  // LQ design weight for the ancillary gain (defaults to Q_H)
  Mat lq_R;  // (defaults to R_H)
  double mrpi_eps = 0.01;
  int terminal_bisection_iters = 40;
  int terminal_samples = 1000;
};

/// Gain, terminal ingredients, invariant tube and tightened input set.
/// Throws std::runtime_error when F_L^{[N_L]} fails the Schur check (the
/// design must be retried with different LQ weights) or when the tightened
/// input set is empty.
HLDesign synthesize_hl(const plant::LargeScaleSystem& sys,
                       const reduction::ReducedModel& rm,
                       const tuning::TimingConfig& timing,
                       const tuning::Budget& budget, double rho_w,
                       const plant::ReferenceTriple& ref,
                       const SynthesisOptions& opts);

struct HLStepResult {
  Vec u_bar;
  HLState state;
  bool feasible = false;
  std::string failure;  // constraint family that broke phase 1, when any
};

/// Solves the nominal tube OCP over both the nominal initial state and the
/// input sequence, then applies the ancillary feedback. The warm state, when
/// given, seeds the solver with the shifted previous solution extended by the
/// terminal control law.
HLStepResult hl_step(const HLDesign& design, const Vec& x,
                     const std::optional<HLState>& warm = std::nullopt,
                     double tol = 1e-8);

/// Deterministic low-discrepancy points on the boundary of the ellipsoid
/// { e : e'Pe = level } (Halton sequence, Box-Muller, sphere projection).
std::vector<Vec> ellipsoid_boundary_samples(const Mat& P, double level,
                                            int count);

}  // namespace hl
}  // namespace htmpc
