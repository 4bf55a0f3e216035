#include "htmpc/ll_controller.hpp"

#include <cmath>
#include <stdexcept>

namespace htmpc {
namespace ll {

using linalg::matrix_power;
using linalg::matrix_power_sum;

GainSet design_gains(const plant::LargeScaleSystem& sys,
                     const std::vector<Mat>& Q_lq, const std::vector<Mat>& R_lq) {
  const int M = sys.M();
  if (static_cast<int>(Q_lq.size()) != M || static_cast<int>(R_lq.size()) != M) {
    throw std::invalid_argument("design_gains: one weight pair per subsystem");
  }
  GainSet out;
  out.K = Mat::Zero(sys.m(), sys.n());
  int ro = 0, co = 0;
  for (int i = 0; i < M; ++i) {
    const auto& s = sys.subsystems[i];
    auto lqr = linalg::dlqr_gain(s.A, s.B, Q_lq[i], R_lq[i]);
    out.K_blocks.push_back(lqr.K);
    out.K.block(ro, co, s.m(), s.n()) = lqr.K;
    ro += s.m();
    co += s.n();
  }
  out.F_L = sys.A + sys.B * out.K;
  if (!linalg::is_schur(out.F_L)) {
    throw std::runtime_error(
        "design_gains: collective F_L = A_L + B_L K is not Schur stable; "
        "retune the local LQ weights");
  }
  return out;
}

LLDesign finalize_design(const plant::LargeScaleSystem& sys,
                         const reduction::ReducedModel& rm,
                         const tuning::TimingConfig& timing,
                         const GainSet& gains, const tuning::Budget& budget,
                         const std::vector<Mat>& Q_ll,
                         const std::vector<Mat>& R_ll) {
  const int M = sys.M();
  LLDesign d;
  d.K = gains.K;
  d.F_L = gains.F_L;
  d.N_L = timing.N_L;
  for (int i = 0; i < M; ++i) {
    const auto& s = sys.subsystems[i];
    SubsystemDesign sd;
    sd.K = gains.K_blocks[i];
    sd.zeta = timing.zeta[i];
    sd.N = timing.N[i];
    sd.A_zeta = matrix_power(s.A, sd.zeta);
    sd.B_zeta = matrix_power_sum(s.A, s.B, sd.zeta);
    sd.beta = rm.beta_blocks[i];
    sd.Q = Q_ll[i];
    sd.R = R_ll[i];
    const double hw = budget.rho_delta_u(i) / std::sqrt(static_cast<double>(s.m()));
    sd.du_box = sets::Box::symmetric(Vec::Constant(s.m(), hw));
    d.sub.push_back(std::move(sd));
  }
  return d;
}

std::vector<Vec> simulate_hat(const plant::LargeScaleSystem& sys, const Vec& x,
                              const Vec& u_bar, int N_L) {
  std::vector<Vec> traj;
  traj.reserve(N_L + 1);
  traj.push_back(x);
  for (int h = 0; h < N_L; ++h) {
    traj.push_back(sys.A * traj.back() + sys.B * u_bar);
  }
  return traj;
}

std::vector<Vec> terminal_rhs(const plant::LargeScaleSystem& sys,
                              const reduction::ReducedModel& rm,
                              const Vec& prediction, const Vec& x_hat_end) {
  std::vector<Vec> rhs;
  int xo = 0;
  for (int i = 0; i < sys.M(); ++i) {
    const int ni = sys.subsystems[i].n();
    const int nbi = static_cast<int>(rm.beta_blocks[i].rows());
    rhs.push_back(prediction.segment(rm.reduced_offset(i), nbi) -
                  rm.beta_blocks[i] * x_hat_end.segment(xo, ni));
    xo += ni;
  }
  return rhs;
}

LLSolveResult ll_solve(const LLDesign& design, int i, const Vec& rhs_i,
                       double tol) {
  const auto& sd = design.sub[static_cast<size_t>(i)];
  const int m = static_cast<int>(sd.B_zeta.cols());
  const int n = static_cast<int>(sd.A_zeta.rows());
  const int N = sd.N;
  const int nv = N * m;

  // dxhat(l) = sum_{r<l} A_z^{l-1-r} B_z du(r), dxhat(0) = 0.
  std::vector<Mat> pred(N + 1, Mat::Zero(n, nv));
  for (int l = 1; l <= N; ++l) {
    for (int r = 0; r < l; ++r) {
      pred[l].block(0, r * m, n, m) = matrix_power(sd.A_zeta, l - 1 - r) * sd.B_zeta;
    }
  }

  qp::QuadProgram prog;
  prog.H = Mat::Zero(nv, nv);
  for (int l = 0; l < N; ++l) {
    prog.H += 2.0 * pred[l].transpose() * sd.Q * pred[l];
    prog.H.block(l * m, l * m, m, m) += 2.0 * sd.R;
  }
  prog.g = Vec::Zero(nv);
  // Terminal equality beta_i dxhat(N) = rhs_i.
  prog.A_eq = sd.beta * pred[N];
  prog.b_eq = rhs_i;

  // Box per slot.
  prog.A_in = Mat::Zero(2 * nv, nv);
  prog.b_in = Vec::Zero(2 * nv);
  prog.A_in.topRows(nv).setIdentity();
  prog.A_in.bottomRows(nv) = -Mat::Identity(nv, nv);
  for (int l = 0; l < N; ++l) {
    prog.b_in.segment(l * m, m) = sd.du_box.upper;
    prog.b_in.segment(nv + l * m, m) = -sd.du_box.lower;
  }

  LLSolveResult out;
  qp::Result res = qp::solve(prog, tol);
  out.status = res.status;
  out.feasible = res.status == qp::SolveStatus::Optimal;
  if (out.feasible) {
    for (int l = 0; l < N; ++l) {
      out.du_hat.push_back(res.x.segment(l * m, m));
    }
  }
  return out;
}

LLSlowStepPlan plan_slow_step(const plant::LargeScaleSystem& sys,
                              const reduction::ReducedModel& rm,
                              const LLDesign& design, const Vec& x,
                              const Vec& u_bar, const Vec& prediction) {
  LLSlowStepPlan plan;
  plan.xhat = simulate_hat(sys, x, u_bar, design.N_L);
  std::vector<Vec> rhs = terminal_rhs(sys, rm, prediction, plan.xhat.back());

  plan.feasible = true;
  for (int i = 0; i < sys.M(); ++i) {
    LLSolveResult r = ll_solve(design, i, rhs[static_cast<size_t>(i)]);
    if (!r.feasible) {
      plan.feasible = false;
      plan.du_hat.emplace_back();
      plan.dxhat.emplace_back();
      continue;
    }
    plan.du_hat.push_back(std::move(r.du_hat));

    // Fast-rate decentralized rollout with the piecewise-constant plan input.
    const auto& s = sys.subsystems[i];
    const auto& sd = design.sub[static_cast<size_t>(i)];
    std::vector<Vec> dxhat(design.N_L + 1, Vec::Zero(s.n()));
    for (int j = 0; j < design.N_L; ++j) {
      const Vec& du = plan.du_hat[static_cast<size_t>(i)]
                               [static_cast<size_t>(j / sd.zeta)];
      dxhat[static_cast<size_t>(j + 1)] =
          s.A * dxhat[static_cast<size_t>(j)] + s.B * du;
    }
    const double resid =
        (rm.beta_blocks[i] * dxhat.back() - rhs[static_cast<size_t>(i)])
            .cwiseAbs()
            .maxCoeff();
    plan.terminal_residual = std::max(plan.terminal_residual, resid);
    plan.dxhat.push_back(std::move(dxhat));
  }
  return plan;
}

Vec reconstruct_fast(const LLDesign& design, const LLSlowStepPlan& plan, int i,
                     int j, const Vec& dx_i) {
  if (j < 0 || j >= design.N_L) {
    throw std::out_of_range("reconstruct_fast: fast offset outside the slow step");
  }
  const auto& sd = design.sub[static_cast<size_t>(i)];
  const Vec& du_hat =
      plan.du_hat[static_cast<size_t>(i)][static_cast<size_t>(j / sd.zeta)];
  const Vec& dxhat = plan.dxhat[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return du_hat + sd.K * (dx_i - dxhat);
}

}  // namespace ll
}  // namespace htmpc
