#include "htmpc/hl_controller.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "htmpc/qp.hpp"

namespace htmpc {
namespace hl {

using linalg::matrix_power;
using linalg::matrix_power_sum;

namespace {

double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                           31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

}  // namespace

std::vector<Vec> ellipsoid_boundary_samples(const Mat& P, double level,
                                            int count) {
  const int d = static_cast<int>(P.rows());
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument("ellipsoid_boundary_samples: P must be PD");
  }
  const Mat P_inv_sqrt = es.eigenvectors() *
                         es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
  const int pairs = (d + 1) / 2;
  std::vector<Vec> out;
  out.reserve(count);
  for (int s = 1; s <= count; ++s) {
    Vec gauss(2 * pairs);
    for (int p = 0; p < pairs; ++p) {
      const double u1 =
          std::max(1e-12, halton(s, kPrimes[(2 * p) % 20]));
      const double u2 = halton(s, kPrimes[(2 * p + 1) % 20]);
      const double mag = std::sqrt(-2.0 * std::log(u1));
      gauss(2 * p) = mag * std::cos(2.0 * M_PI * u2);
      gauss(2 * p + 1) = mag * std::sin(2.0 * M_PI * u2);
    }
    Vec dir = gauss.head(d);
    const double nrm = dir.norm();
    if (nrm < 1e-12) continue;
    out.push_back(std::sqrt(level) * (P_inv_sqrt * (dir / nrm)));
  }
  return out;
}

HLDesign synthesize_hl(const plant::LargeScaleSystem& sys,
                       const reduction::ReducedModel& rm,
                       const tuning::TimingConfig& timing,
                       const tuning::Budget& budget, double rho_w,
                       const plant::ReferenceTriple& ref,
                       const SynthesisOptions& opts) {
  const int N_L = timing.N_L;
  const int nb = rm.n_bar();
  const int m = sys.m();

  HLDesign d;
  d.A_H_NL = matrix_power(rm.A_H, N_L);
  d.B_H_NL = matrix_power_sum(rm.A_H, rm.B_H, N_L);
  d.B_L_NL = matrix_power_sum(sys.A, sys.B, N_L);
  d.Q_H = opts.Q_H.size() ? opts.Q_H : Mat::Identity(nb, nb);
  d.R_H = opts.R_H.size() ? opts.R_H : Mat(0.1 * Mat::Identity(m, m));
  const Mat lq_Q = opts.lq_Q.size() ? opts.lq_Q : d.Q_H;
  const Mat lq_R = opts.lq_R.size() ? opts.lq_R : d.R_H;
  d.N_H = timing.N_H;
  d.beta = rm.beta;
  d.x_S = ref.x_S;
  d.u_bar_S = ref.u_S;
  d.x_bar_S = rm.beta * ref.x_S;

  d.K_H = linalg::dlqr_gain(d.A_H_NL, d.B_H_NL, lq_Q, lq_R).K;
  d.F_H = d.A_H_NL + d.B_H_NL * d.K_H;
  if (!linalg::is_schur(d.F_H)) {
    throw std::runtime_error("synthesize_hl: F_H not Schur stable");
  }
  d.F_L_NL = matrix_power(sys.A, N_L) + d.B_L_NL * d.K_H * rm.beta;
  if (!linalg::is_schur(d.F_L_NL)) {
    throw std::runtime_error(
        "synthesize_hl: F_L^{[N_L]} not Schur stable; retry with different "
        "LQ weights");
  }

  d.P_H = linalg::solve_dlyap(
      d.F_H, d.Q_H + d.K_H.transpose() * d.R_H * d.K_H);

  d.W = sets::Ball::origin(nb, rho_w);
  d.Z = sets::mrpi_outer(d.F_H, d.W, opts.mrpi_eps);

  // Per-coordinate high-level input boxes, inscribed in the budget balls.
  Vec u_hw(m);
  {
    int off = 0;
    for (int i = 0; i < sys.M(); ++i) {
      const int mi = sys.subsystems[i].m();
      u_hw.segment(off, mi).setConstant(budget.rho_u_bar(i) /
                                        std::sqrt(static_cast<double>(mi)));
      off += mi;
    }
  }
  const sets::Box U_bar = sets::Box::symmetric(u_hw);
  const sets::Box KZ =
      sets::Box::symmetric(d.K_H.cwiseAbs() * sets::box_bound(d.Z));
  try {
    d.U_tight0 = sets::pontryagin_diff(U_bar, KZ);
  } catch (const std::runtime_error&) {
    throw std::runtime_error(
        "synthesize_hl: tightened input set is empty (K_H Z exceeds the "
        "high-level budget)");
  }
  d.U_tight = d.U_tight0.translated(d.u_bar_S);

  // Terminal level: largest c with K_H X_F inside the tightened set. The
  // ellipsoid is invariant for F_H at every level because P_H solves the
  // Lyapunov equation with a positive definite right-hand side.
  const Mat P_inv = d.P_H.llt().solve(Mat::Identity(nb, nb));
  const Vec hw = d.U_tight0.half_width();
  double c_hi = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    const double q = d.K_H.row(j) * P_inv * d.K_H.row(j).transpose();
    if (q > 1e-300) c_hi = std::min(c_hi, hw(j) * hw(j) / q);
  }
  if (!std::isfinite(c_hi)) c_hi = 1.0;
  double lo = 0.0, hi = 2.0 * c_hi;
  for (int it = 0; it < opts.terminal_bisection_iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    bool ok = true;
    for (int j = 0; j < m && ok; ++j) {
      const double q = d.K_H.row(j) * P_inv * d.K_H.row(j).transpose();
      if (mid * q > hw(j) * hw(j)) ok = false;
    }
    (ok ? lo : hi) = mid;
  }
  const double level = lo;
  if (level <= 0.0) {
    throw std::runtime_error("synthesize_hl: terminal set collapsed to a point");
  }
  d.X_F = sets::Ellipsoid{d.x_bar_S, d.P_H, level};

  // Sampled validation of invariance and input inclusion on the boundary.
  for (const Vec& e : ellipsoid_boundary_samples(d.P_H, level, opts.terminal_samples)) {
    const Vec e_next = d.F_H * e;
    if (e_next.dot(d.P_H * e_next) > level * (1.0 + 1e-9) + 1e-12) {
      throw std::runtime_error("synthesize_hl: terminal invariance check failed");
    }
    if (!sets::contains(d.U_tight0, Vec(d.K_H * e), 1e-9 * (1.0 + hw.maxCoeff()))) {
      throw std::runtime_error("synthesize_hl: terminal input inclusion failed");
    }
  }
  return d;
}

namespace {

struct OcpMatrices {
  std::vector<Mat> E;  // E[j] maps decision vector to nominal state j
  Mat H;
  Vec g;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;
  int nb = 0, m = 0, nv = 0;
};

OcpMatrices build_ocp(const HLDesign& d, const Vec& x) {
  OcpMatrices o;
  o.nb = static_cast<int>(d.A_H_NL.rows());
  o.m = static_cast<int>(d.B_H_NL.cols());
  const int N = d.N_H;
  o.nv = o.nb + N * o.m;

  o.E.assign(N + 1, Mat::Zero(o.nb, o.nv));
  o.E[0].leftCols(o.nb).setIdentity();
  for (int j = 0; j < N; ++j) {
    o.E[j + 1] = d.A_H_NL * o.E[j];
    o.E[j + 1].block(0, o.nb + j * o.m, o.nb, o.m) += d.B_H_NL;
  }

  o.H = Mat::Zero(o.nv, o.nv);
  o.g = Vec::Zero(o.nv);
  for (int j = 0; j < N; ++j) {
    o.H += 2.0 * o.E[j].transpose() * d.Q_H * o.E[j];
    o.g += -2.0 * o.E[j].transpose() * (d.Q_H * d.x_bar_S);
    o.H.block(o.nb + j * o.m, o.nb + j * o.m, o.m, o.m) += 2.0 * d.R_H;
    o.g.segment(o.nb + j * o.m, o.m) += -2.0 * (d.R_H * d.u_bar_S);
  }
  o.H += 2.0 * o.E[N].transpose() * d.P_H * o.E[N];
  o.g += -2.0 * o.E[N].transpose() * (d.P_H * d.x_bar_S);

  // Initial constraint beta x - xbar in Z; degenerate coordinates pin the
  // nominal state exactly.
  const Vec bx = d.beta * x;
  std::vector<int> eq_rows, in_rows;
  for (int r = 0; r < o.nb; ++r) {
    if (d.Z.upper(r) - d.Z.lower(r) < 1e-14) {
      eq_rows.push_back(r);
    } else {
      in_rows.push_back(r);
    }
  }
  o.A_eq = Mat::Zero(static_cast<int>(eq_rows.size()), o.nv);
  o.b_eq = Vec::Zero(static_cast<int>(eq_rows.size()));
  for (size_t k = 0; k < eq_rows.size(); ++k) {
    const int r = eq_rows[k];
    o.A_eq(static_cast<int>(k), r) = 1.0;
    o.b_eq(static_cast<int>(k)) = bx(r) - d.Z.center()(r);
  }

  const int n_in = 2 * static_cast<int>(in_rows.size()) + 2 * N * o.m;
  o.A_in = Mat::Zero(n_in, o.nv);
  o.b_in = Vec::Zero(n_in);
  int row = 0;
  for (int r : in_rows) {
    o.A_in(row, r) = 1.0;
    o.b_in(row) = bx(r) - d.Z.lower(r);
    ++row;
    o.A_in(row, r) = -1.0;
    o.b_in(row) = d.Z.upper(r) - bx(r);
    ++row;
  }
  for (int j = 0; j < N; ++j) {
    for (int c = 0; c < o.m; ++c) {
      o.A_in(row, o.nb + j * o.m + c) = 1.0;
      o.b_in(row) = d.u_bar_S(c) + d.U_tight0.upper(c);
      ++row;
      o.A_in(row, o.nb + j * o.m + c) = -1.0;
      o.b_in(row) = -(d.u_bar_S(c) + d.U_tight0.lower(c));
      ++row;
    }
  }
  return o;
}

}  // namespace

HLStepResult hl_step(const HLDesign& design, const Vec& x,
                     const std::optional<HLState>& warm, double tol) {
  HLStepResult out;
  OcpMatrices o = build_ocp(design, x);
  const int N = design.N_H;

  // Shifted previous solution extended by the terminal law; feasible whenever
  // the tube recursion holds, and valid for every outer cut because it
  // satisfies the true ellipsoid constraint.
  std::optional<Vec> start;
  if (warm && warm->feasible) {
    Vec xi = Vec::Zero(o.nv);
    Vec xbar = design.A_H_NL * warm->x_bar_nom +
               design.B_H_NL * warm->u_nom_seq.front();
    xi.head(o.nb) = xbar;
    Vec xj = xbar;
    for (int j = 0; j + 1 < N; ++j) {
      xi.segment(o.nb + j * o.m, o.m) = warm->u_nom_seq[static_cast<size_t>(j + 1)];
      xj = design.A_H_NL * xj +
           design.B_H_NL * warm->u_nom_seq[static_cast<size_t>(j + 1)];
    }
    xi.tail(o.m) = design.u_bar_S + design.K_H * (xj - design.x_bar_S);
    start = xi;
  }

  qp::QuadProgram prog{o.H, o.g, o.A_eq, o.b_eq, o.A_in, o.b_in};
  const double level = design.X_F.level;
  qp::Result res;
  bool terminal_ok = false;
  constexpr int kMaxCuts = 20;
  for (int cut = 0; cut <= kMaxCuts; ++cut) {
    res = qp::solve(prog, tol, start);
    if (res.status != qp::SolveStatus::Optimal) break;
    const Vec xN = o.E[N] * res.x;
    const Vec e = xN - design.x_bar_S;
    const double q = e.dot(design.P_H * e);
    if (q <= level + 1e-8 * (1.0 + level)) {
      terminal_ok = true;
      break;
    }
    const Vec grad = 2.0 * design.P_H * e;
    Mat row = grad.transpose() * o.E[N];
    prog.A_in.conservativeResize(prog.A_in.rows() + 1, o.nv);
    prog.A_in.row(prog.A_in.rows() - 1) = row;
    prog.b_in.conservativeResize(prog.b_in.rows() + 1);
    prog.b_in(prog.b_in.rows() - 1) = level - q + grad.dot(xN);
  }

  if (res.status != qp::SolveStatus::Optimal || !terminal_ok) {
    out.feasible = false;
    if (res.status == qp::SolveStatus::Infeasible) {
      const bool empty_inputs =
          (design.U_tight0.upper - design.U_tight0.lower).minCoeff() <= 0.0;
      out.failure = empty_inputs ? "input (tightened set empty)"
                                 : "terminal (not reachable within the horizon)";
    } else if (!terminal_ok) {
      out.failure = "terminal (cut iteration exhausted)";
    } else {
      out.failure = qp::to_string(res.status);
    }
    out.state.feasible = false;
    return out;
  }

  out.feasible = true;
  out.state.feasible = true;
  out.state.x_bar_nom = res.x.head(o.nb);
  for (int j = 0; j < N; ++j) {
    out.state.u_nom_seq.push_back(res.x.segment(o.nb + j * o.m, o.m));
  }
  const Vec bx = design.beta * x;
  out.u_bar = out.state.u_nom_seq.front() +
              design.K_H * (bx - out.state.x_bar_nom);
  out.state.last_prediction = design.A_H_NL * bx + design.B_H_NL * out.u_bar;
  return out;
}

}  // namespace hl
}  // namespace htmpc
