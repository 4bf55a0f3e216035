#include "htmpc/closed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace htmpc {
namespace closed_loop {

void apply_defaults(ScenarioConfig& cfg) {
  const int M = static_cast<int>(cfg.subsystems.size());
  if (cfg.n_bar.empty()) {
    for (const auto& s : cfg.subsystems) cfg.n_bar.push_back(s.n());
  }
  if (cfg.zeta.empty()) cfg.zeta.assign(M, 1);
  int m = 0, nb = 0;
  for (int i = 0; i < M; ++i) {
    m += cfg.subsystems[i].m();
    nb += cfg.n_bar[i];
  }
  if (cfg.Q_H.size() == 0) cfg.Q_H = Mat::Identity(nb, nb);
  if (cfg.R_H.size() == 0) cfg.R_H = 0.1 * Mat::Identity(m, m);
  if (cfg.lq_hl_Q.size() == 0) cfg.lq_hl_Q = cfg.Q_H;
  if (cfg.lq_hl_R.size() == 0) cfg.lq_hl_R = cfg.R_H;
  auto fill = [&](std::vector<Mat>& v, bool input_side) {
    if (!v.empty()) return;
    for (const auto& s : cfg.subsystems) {
      v.push_back(Mat::Identity(input_side ? s.m() : s.n(),
                                input_side ? s.m() : s.n()));
    }
  };
  fill(cfg.Q_ll, false);
  fill(cfg.R_ll, true);
  fill(cfg.lq_ll_Q, false);
  fill(cfg.lq_ll_R, true);
  if (cfg.U_S.empty()) {
    for (int i = 0; i < M; ++i) {
      cfg.U_S.emplace_back(
          sets::Ball::origin(cfg.subsystems[i].m(), cfg.rho_u(i)));
    }
  }
  if (cfg.reference.empty()) {
    int p = 0;
    for (const auto& s : cfg.subsystems) p += s.p();
    cfg.reference.push_back({0, Vec::Zero(p)});
  }
}

namespace {

reduction::ReducedModel build_reduction(const ScenarioConfig& cfg,
                                        const plant::LargeScaleSystem& sys) {
  std::vector<Mat> betas;
  Mat A_H;
  switch (cfg.ah_mode) {
    case AHMode::Exact: {
      for (const auto& s : sys.subsystems) {
        betas.push_back(Mat::Identity(s.n(), s.n()));
      }
      A_H = sys.A;
      break;
    }
    case AHMode::Diagonal: {
      for (int i = 0; i < sys.M(); ++i) {
        betas.push_back(
            reduction::build_beta(sys.subsystems[i], cfg.n_bar[i], cfg.beta_b_only));
      }
      A_H = Mat(cfg.ah_decay.asDiagonal());
      break;
    }
    case AHMode::Matrix: {
      for (int i = 0; i < sys.M(); ++i) {
        betas.push_back(
            reduction::build_beta(sys.subsystems[i], cfg.n_bar[i], cfg.beta_b_only));
      }
      A_H = cfg.ah_matrix;
      break;
    }
  }
  if (cfg.beta_b_only && !reduction::kernel_transversality_ok(sys, betas)) {
    throw std::runtime_error(
        "reduction: the input-only kernel choice fails the collective "
        "transversality post-check");
  }
  return reduction::build_reduced_model(sys, betas, A_H);
}

double input_margin(const std::vector<sets::ConvexSet>& U_S,
                    const plant::LargeScaleSystem& sys, const Vec& u,
                    const Vec& u_S) {
  double margin = std::numeric_limits<double>::infinity();
  int off = 0;
  for (int i = 0; i < sys.M(); ++i) {
    const int mi = sys.subsystems[i].m();
    const Vec d = u.segment(off, mi) - u_S.segment(off, mi);
    if (const auto* ball = std::get_if<sets::Ball>(&U_S[static_cast<size_t>(i)])) {
      margin = std::min(margin, ball->radius - (d - ball->center).norm());
    } else if (const auto* box =
                   std::get_if<sets::Box>(&U_S[static_cast<size_t>(i)])) {
      margin = std::min(margin, (box->upper - d).minCoeff());
      margin = std::min(margin, (d - box->lower).minCoeff());
    }
    off += mi;
  }
  return margin;
}

}  // namespace

Vec infinite_sum_outer_radius(const Mat& F, double rho) {
  const int n = static_cast<int>(F.rows());
  Vec radius = Vec::Zero(n);
  if (rho <= 0.0) return radius;
  constexpr int kCap = 100000;
  Mat P = Mat::Identity(n, n);
  int contraction_k = -1;
  double contraction = 1.0;
  std::vector<double> window;
  for (int k = 0; k < kCap; ++k) {
    for (int r = 0; r < n; ++r) radius(r) += rho * P.row(r).norm();
    const double t = linalg::spectral_norm(P);
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
        const double tail = rho * contraction * w / (1.0 - contraction);
        if (tail < 1e-12 * (1.0 + radius.maxCoeff())) {
          radius.array() += tail;  // keep the approximation outer
          return radius;
        }
      }
    }
    P = P * F;
  }
  throw std::runtime_error("infinite_sum_outer_radius: cap exceeded");
}

OfflineDesign offline(ScenarioConfig& cfg) {
  OfflineDesign off;
  off.sys = plant::assemble(cfg.subsystems, cfg.coupling);
  apply_defaults(cfg);

  auto a1 = plant::validate_assumption1(off.sys);
  if (!a1.all_pass()) {
    std::string what = "offline: the plant fails the standing assumptions:";
    for (const auto& it : a1.items) {
      if (!it.pass) what += " [" + it.name + "]";
    }
    throw std::runtime_error(what);
  }

  off.rm = build_reduction(cfg, off.sys);
  auto a2 = reduction::validate_assumption2(off.rm, off.sys);
  if (!a2.all_pass()) {
    throw std::runtime_error(
        "offline: the reduced model fails its compatibility checks");
  }

  off.timing = tuning::make_timing(cfg.N_L, cfg.N_H, cfg.zeta);
  off.gains = ll::design_gains(off.sys, cfg.lq_ll_Q, cfg.lq_ll_R);
  off.report = tuning::assumption3_report(off.sys, off.rm, off.timing,
                                          off.gains.K_blocks, off.gains.F_L,
                                          cfg.rho_u, cfg.gamma1, cfg.gamma2);
  return off;
}

RunArtifacts run(const ScenarioConfig& cfg_in) {
  ScenarioConfig cfg = cfg_in;

  RunArtifacts art;
  OfflineDesign off = offline(cfg);
  art.sys = std::move(off.sys);
  art.rm = std::move(off.rm);
  art.report = std::move(off.report);
  art.U_S = cfg.U_S;
  const tuning::TimingConfig& timing = off.timing;
  const ll::GainSet& gains = off.gains;

  if (!art.report.budget_feasible) {
    throw tuning::BudgetInfeasible(
        "run: the input-budget problem is infeasible; increase N_L");
  }
  if (!art.report.overall_pass && !cfg.override_tuning_gate) {
    throw std::runtime_error(
        "run: the offline tuning checks failed and the override flag is not "
        "set (see the tuning report)");
  }

  art.ll_design = ll::finalize_design(art.sys, art.rm, timing, gains,
                                      art.report.budget, cfg.Q_ll, cfg.R_ll);

  hl::SynthesisOptions hl_opts;
  hl_opts.Q_H = cfg.Q_H;
  hl_opts.R_H = cfg.R_H;
  hl_opts.lq_Q = cfg.lq_hl_Q;
  hl_opts.lq_R = cfg.lq_hl_R;
  hl_opts.mrpi_eps = cfg.mrpi_eps;

  size_t ref_idx = 0;
  art.ref = plant::steady_state_from_output(art.sys, cfg.reference[0].y_S);
  art.rm.x_bar_S = art.rm.beta * art.ref.x_S;
  art.hl_design = hl::synthesize_hl(art.sys, art.rm, timing, art.report.budget,
                                    art.report.rho_w, art.ref, hl_opts);

  // Small-gain constants complete the report once the gains exist.
  {
    Mat Q_coll = Mat::Zero(art.sys.n(), art.sys.n());
    Mat R_coll = Mat::Zero(art.sys.m(), art.sys.m());
    int qo = 0, ro = 0;
    for (int i = 0; i < art.sys.M(); ++i) {
      Q_coll.block(qo, qo, cfg.Q_ll[i].rows(), cfg.Q_ll[i].cols()) = cfg.Q_ll[i];
      R_coll.block(ro, ro, cfg.R_ll[i].rows(), cfg.R_ll[i].cols()) = cfg.R_ll[i];
      qo += static_cast<int>(cfg.Q_ll[i].rows());
      ro += static_cast<int>(cfg.R_ll[i].rows());
    }
    art.report.small_gain = tuning::small_gain_sigma(
        art.sys, art.rm, art.hl_design.K_H, art.hl_design.F_L_NL,
        gains.K_blocks, gains.F_L, Q_coll, R_coll,
        art.report.budget.rho_delta_u, timing.N_L);
    art.report.sigma_NL = art.report.small_gain.sigma;
    art.report.rho_x = art.report.small_gain.rho_x;
    art.report.has_small_gain = true;
  }
  art.claim_iv_radius =
      infinite_sum_outer_radius(art.hl_design.F_L_NL, art.report.rho_x);

  SimulationTrace& trace = art.trace;
  trace.x0 = cfg.x0.size() ? cfg.x0 : Vec(Vec::Zero(art.sys.n()));
  Vec x = trace.x0;
  const int N_L = timing.N_L;
  std::optional<hl::HLState> warm;

  tuning::MismatchOperators mo = tuning::mismatch_operators(art.sys, art.rm, N_L);

  for (int k = 0; k < cfg.run_slow_steps; ++k) {
    SlowRecord rec;
    rec.k = k;
    rec.rho_w_in_force = art.report.rho_w;
    rec.x_err_norm = (x - art.ref.x_S).norm();

    // Reference switches re-derive the steady state and every
    // reference-dependent synthesis product.
    if (ref_idx + 1 < cfg.reference.size() &&
        cfg.reference[ref_idx + 1].at_slow_step == k) {
      ++ref_idx;
      art.ref = plant::steady_state_from_output(art.sys,
                                                cfg.reference[ref_idx].y_S);
      art.rm.x_bar_S = art.rm.beta * art.ref.x_S;
      art.hl_design = hl::synthesize_hl(art.sys, art.rm, timing,
                                        art.report.budget, art.report.rho_w,
                                        art.ref, hl_opts);
      warm.reset();
      rec.reference_switch = true;
      rec.x_err_norm = (x - art.ref.x_S).norm();
    }

    hl::HLStepResult hs = hl::hl_step(art.hl_design, x, warm, cfg.qp_tol);
    rec.hl_feasible = hs.feasible;
    if (!hs.feasible) {
      trace.failure = "high-level problem infeasible at slow step " +
                      std::to_string(k) + " (" + hs.failure + ")";
      trace.slow.push_back(rec);
      return art;
    }
    rec.u_bar = hs.u_bar;
    rec.e_bar = art.rm.beta * x - hs.state.x_bar_nom;

    ll::LLSlowStepPlan plan = ll::plan_slow_step(
        art.sys, art.rm, art.ll_design, x, hs.u_bar, hs.state.last_prediction);
    rec.ll_feasible = plan.feasible;
    if (!plan.feasible) {
      trace.failure = "low-level problem infeasible at slow step " +
                      std::to_string(k);
      trace.slow.push_back(rec);
      return art;
    }

    // Terminal-target identity: the direct evaluation must match the
    // mismatch-operator form on (x - x_S, u_bar - u_S).
    {
      std::vector<Vec> rhs = ll::terminal_rhs(art.sys, art.rm,
                                              hs.state.last_prediction,
                                              plan.xhat.back());
      const Vec alt = mo.A_mis * (x - art.ref.x_S) +
                      mo.B_mis * (hs.u_bar - art.ref.u_S);
      double err = 0.0;
      for (int i = 0; i < art.sys.M(); ++i) {
        const int nbi = static_cast<int>(art.rm.beta_blocks[i].rows());
        err = std::max(err, (rhs[static_cast<size_t>(i)] -
                             alt.segment(art.rm.reduced_offset(i), nbi))
                                .cwiseAbs()
                                .maxCoeff());
      }
      rec.rhs_identity_err = err;
    }

    rec.input_margin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < N_L; ++j) {
      FastRecord fr;
      fr.k = k;
      fr.h = k * N_L + j;
      fr.x = x;
      fr.du = Vec::Zero(art.sys.m());
      fr.du_hat = Vec::Zero(art.sys.m());
      int off = 0, xoff = 0;
      for (int i = 0; i < art.sys.M(); ++i) {
        const int mi = art.sys.subsystems[i].m();
        const int ni = art.sys.subsystems[i].n();
        const Vec dx_i = x.segment(xoff, ni) -
                         plan.xhat[static_cast<size_t>(j)].segment(xoff, ni);
        fr.du.segment(off, mi) =
            ll::reconstruct_fast(art.ll_design, plan, i, j, dx_i);
        fr.du_hat.segment(off, mi) =
            plan.du_hat[static_cast<size_t>(i)]
                       [static_cast<size_t>(j / timing.zeta[i])];
        off += mi;
        xoff += ni;
      }
      fr.u = hs.u_bar + fr.du;
      const double margin = input_margin(art.U_S, art.sys, fr.u, art.ref.u_S);
      if (margin < rec.input_margin) {
        rec.input_margin = margin;
        rec.worst_margin_h = fr.h;
      }
      x = art.sys.A * x + art.sys.B * fr.u;
      trace.fast.push_back(std::move(fr));
    }

    rec.w_bar = art.rm.beta * x - hs.state.last_prediction;
    rec.w_norm = rec.w_bar.norm();
    trace.slow.push_back(std::move(rec));
    warm = hs.state;
  }
  trace.completed = true;
  return art;
}

bool Verdict::all_pass() const {
  for (const auto& c : claims) {
    if (c.applicable && !c.pass) return false;
  }
  return true;
}

VerifySummary make_summary(const RunArtifacts& art) {
  VerifySummary s;
  const auto& trace = art.trace;
  const int K = static_cast<int>(trace.slow.size());
  const int N_L = art.ll_design.N_L;
  for (const auto& r : trace.slow) {
    s.w_norm.push_back(r.w_norm);
    s.rho_w.push_back(r.rho_w_in_force);
    s.input_margin.push_back(r.input_margin);
    s.worst_margin_h.push_back(r.worst_margin_h);
    s.rhs_identity_err.push_back(r.rhs_identity_err);
    s.hl_ok.push_back(r.hl_feasible);
    s.ll_ok.push_back(r.ll_feasible);
    s.reference_switch.push_back(r.reference_switch);
  }
  for (int k = 0; k < K; ++k) {
    if (static_cast<size_t>(k) * N_L < trace.fast.size()) {
      s.x_slow.push_back(trace.fast[static_cast<size_t>(k) * N_L].x);
    }
  }
  if (!trace.fast.empty() && trace.completed) {
    const auto& last = trace.fast.back();
    s.x_slow.push_back(art.sys.A * last.x + art.sys.B * last.u);
  }
  for (const Vec& x : s.x_slow) s.beta_x_slow.push_back(art.rm.beta * x);
  s.x_S = art.ref.x_S;
  s.x_bar_S = art.hl_design.x_bar_S;
  s.Z = art.hl_design.Z;
  s.claim_iv_radius = art.claim_iv_radius;
  s.sigma = art.report.sigma_NL;
  s.completed = trace.completed;
  return s;
}

Verdict verify_summary(const VerifySummary& s) {
  Verdict v;
  int k0 = 0;  // first slow step of the final reference segment
  for (size_t k = 0; k < s.reference_switch.size(); ++k) {
    if (s.reference_switch[k]) k0 = static_cast<int>(k);
  }

  {
    ClaimVerdict c;
    c.claim = "(i) disturbance containment and recursive feasibility";
    c.pass = s.completed;
    double worst = 0.0;
    for (size_t k = 0; k < s.w_norm.size(); ++k) {
      if (!s.hl_ok[k] || !s.ll_ok[k]) c.pass = false;
      worst = std::max(worst, s.w_norm[k] - s.rho_w[k]);
    }
    if (worst > 1e-9) c.pass = false;
    c.detail = "max ||w|| - rho_w = " + std::to_string(worst);
    v.claims.push_back(c);
  }
  {
    ClaimVerdict c;
    c.claim = "(ii) input constraints at every fast step";
    double worst = std::numeric_limits<double>::infinity();
    int worst_h = -1;
    for (size_t k = 0; k < s.input_margin.size(); ++k) {
      if (s.hl_ok[k] && s.ll_ok[k] && s.input_margin[k] < worst) {
        worst = s.input_margin[k];
        worst_h = k < s.worst_margin_h.size() ? s.worst_margin_h[k] : -1;
      }
    }
    c.pass = worst >= -1e-9;
    c.detail = "min margin = " + std::to_string(worst) + " at h = " +
               std::to_string(worst_h);
    v.claims.push_back(c);
  }
  {
    ClaimVerdict c;
    c.claim = "(iii) projected state converges to x_bar_S + Z";
    const sets::Box target = s.Z.translated(s.x_bar_S);
    const double tol_abs = 1e-7 * (1.0 + s.x_bar_S.norm());
    bool ok = s.completed;
    const int start =
        k0 + (static_cast<int>(s.beta_x_slow.size()) - k0) / 2;
    double dmax = 0.0;
    for (size_t k = static_cast<size_t>(start);
         ok && k + 1 < s.beta_x_slow.size(); ++k) {
      const double d0 = sets::distance_to_box(target, s.beta_x_slow[k]);
      const double d1 = sets::distance_to_box(target, s.beta_x_slow[k + 1]);
      dmax = std::max(dmax, d1);
      if (d1 > std::max(d0, tol_abs) + 1e-9) ok = false;
    }
    c.pass = ok;
    c.detail = "tail distance bounded by " + std::to_string(dmax);
    v.claims.push_back(c);
  }
  {
    ClaimVerdict c;
    c.claim = "(iv) state converges to x_S + sum_h F^h B(rho_x) (outer box)";
    c.applicable = s.claim_iv_radius.size() > 0;
    bool ok = s.completed && c.applicable;
    const double tol_abs = 1e-7 * (1.0 + s.x_S.norm());
    const int start = k0 + (static_cast<int>(s.x_slow.size()) - k0) / 2;
    for (size_t k = static_cast<size_t>(start); ok && k < s.x_slow.size(); ++k) {
      const Vec err = (s.x_slow[k] - s.x_S).cwiseAbs();
      if (((err - s.claim_iv_radius).array() > tol_abs).any()) ok = false;
    }
    c.pass = ok;
    v.claims.push_back(c);
  }
  {
    ClaimVerdict c;
    c.claim = "(v) small gain: x(kN_L) -> x_S";
    if (!std::isfinite(s.sigma) || s.sigma >= 1.0) {
      c.applicable = false;
      c.detail = "sigma(N_L) >= 1: convergence not guaranteed";
      c.pass = true;
    } else if (!s.completed || s.x_slow.empty()) {
      c.pass = false;
    } else {
      const double initial = (s.x_slow[static_cast<size_t>(k0)] - s.x_S).norm();
      const double final_err = (s.x_slow.back() - s.x_S).norm();
      const double tol = std::max(1e-6 * initial, 1e-12 * (1.0 + s.x_S.norm()));
      c.pass = final_err <= tol;
      c.detail = "final error " + std::to_string(final_err) + " vs tol " +
                 std::to_string(tol);
    }
    v.claims.push_back(c);
  }
  {
    ClaimVerdict c;
    c.claim = "terminal-target identity (direct vs operator form)";
    double worst = 0.0;
    for (double e : s.rhs_identity_err) worst = std::max(worst, e);
    c.pass = worst <= 1e-8;
    c.detail = "max mismatch = " + std::to_string(worst);
    v.claims.push_back(c);
  }
  return v;
}

Verdict verify_trace(const RunArtifacts& art) {
  return verify_summary(make_summary(art));
}

}  // namespace closed_loop
}  // namespace htmpc
