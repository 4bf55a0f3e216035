#pragma once

#include <string>
#include <vector>

#include "htmpc/hl_controller.hpp"
#include "htmpc/ll_controller.hpp"
#include "htmpc/plant.hpp"
#include "htmpc/reduction.hpp"
#include "htmpc/sets.hpp"
#include "htmpc/tuning.hpp"

namespace htmpc {
namespace closed_loop {

enum class AHMode { Exact, Diagonal, Matrix };

struct ReferenceStep {
  int at_slow_step = 0;
  Vec y_S;
};

struct ScenarioConfig {
  std::vector<plant::Subsystem> subsystems;
  plant::CouplingGraph coupling;

  std::vector<int> n_bar;
  AHMode ah_mode = AHMode::Exact;
  Vec ah_decay;   // diagonal entries when ah_mode == Diagonal
  Mat ah_matrix;  // full matrix when ah_mode == Matrix
  bool beta_b_only = false;

  int N_L = 1;
  int N_H = 1;
  std::vector<int> zeta;

  Mat Q_H, R_H, lq_hl_Q, lq_hl_R;          // empty means default
  std::vector<Mat> Q_ll, R_ll, lq_ll_Q, lq_ll_R;

  Vec rho_u;                         // per-subsystem input amplitudes
  std::vector<sets::ConvexSet> U_S;  // per-subsystem input sets (balls/boxes)

  std::vector<ReferenceStep> reference;  // sorted, first entry at step 0
  Vec x0;
  int run_slow_steps = 50;

  double mrpi_eps = 0.01;
  double gamma1 = 1.0;
  double gamma2 = 0.3;
  double qp_tol = 1e-8;
  bool override_tuning_gate = false;
  unsigned seed = 0;
};

/// Fills empty weight slots with the shipped defaults (Q = I, R = 0.1 I at the
/// high level, identities at the low level) and derives U_S from rho_u when
/// only radii were given.
void apply_defaults(ScenarioConfig& cfg);

/// Offline products shared by tuning, simulation and the CLI.
struct OfflineDesign {
  plant::LargeScaleSystem sys;
  reduction::ReducedModel rm;
  tuning::TimingConfig timing;
  ll::GainSet gains;
  tuning::TuningReport report;
};

/// Assembles the plant, validates the standing assumptions, builds the
/// reduction, designs the low-level gains and runs the tuning pipeline.
/// Applies defaults to cfg in place.
OfflineDesign offline(ScenarioConfig& cfg);

struct FastRecord {
  int k = 0;
  int h = 0;
  Vec x;
  Vec u;
  Vec du;
  Vec du_hat;
};

struct SlowRecord {
  int k = 0;
  Vec u_bar;
  Vec w_bar;
  double w_norm = 0.0;
  bool hl_feasible = false;
  bool ll_feasible = false;
  double input_margin = 0.0;   // min over the step's fast inputs
  int worst_margin_h = -1;     // fast step attaining the minimum
  double x_err_norm = 0.0;     // ||x(kN_L) - x_S||
  Vec e_bar;                   // beta x(kN_L) - nominal initial state
  double rhs_identity_err = 0.0;  // terminal-target evaluation mismatch
  double rho_w_in_force = 0.0;
  bool reference_switch = false;
};

struct SimulationTrace {
  std::vector<FastRecord> fast;
  std::vector<SlowRecord> slow;
  bool completed = false;
  std::string failure;
  Vec x0;
};

/// Everything a verification pass needs alongside the raw trace.
struct RunArtifacts {
  SimulationTrace trace;
  tuning::TuningReport report;
  plant::LargeScaleSystem sys;
  reduction::ReducedModel rm;
  hl::HLDesign hl_design;    // design in force at the end of the run
  ll::LLDesign ll_design;
  plant::ReferenceTriple ref;  // final reference
  std::vector<sets::ConvexSet> U_S;
  Vec claim_iv_radius;  // outer box radius of the theorem-(iv) limit set
};

/// Algorithm-1 online loop: reset, high-level step, auxiliary rollout,
/// terminal targets, low-level plans, fast-rate inputs. Halts on any
/// infeasible subproblem, persisting the partial trace.
RunArtifacts run(const ScenarioConfig& cfg);

struct ClaimVerdict {
  std::string claim;
  bool applicable = true;
  bool pass = false;
  std::string detail;
};

struct Verdict {
  std::vector<ClaimVerdict> claims;
  bool all_pass() const;
};

/// Everything the runtime verdicts consume, in plain arrays so a persisted
/// run can be re-verified without the synthesis objects.
struct VerifySummary {
  std::vector<double> w_norm;
  std::vector<double> rho_w;
  std::vector<double> input_margin;
  std::vector<int> worst_margin_h;
  std::vector<double> rhs_identity_err;
  std::vector<bool> hl_ok;
  std::vector<bool> ll_ok;
  std::vector<bool> reference_switch;
  std::vector<Vec> x_slow;       // slow-boundary states, length K+1 when complete
  std::vector<Vec> beta_x_slow;  // their reduced projections
  Vec x_S;
  Vec x_bar_S;
  sets::Box Z;  // tube cross-section, origin centered
  Vec claim_iv_radius;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  bool completed = false;
};

VerifySummary make_summary(const RunArtifacts& artifacts);

/// Theorem-1 runtime checks.
Verdict verify_summary(const VerifySummary& summary);
Verdict verify_trace(const RunArtifacts& artifacts);

/// Outer box radius of the set sum_h (F)^h Ball(rho), truncated with a
/// geometric tail bound.
Vec infinite_sum_outer_radius(const Mat& F, double rho);

}  // namespace closed_loop
}  // namespace htmpc
