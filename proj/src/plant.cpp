#include "htmpc/plant.hpp"

#include <Eigen/LU>
#include <stdexcept>

namespace htmpc {
namespace plant {

CouplingGraph CouplingGraph::zero(int M) {
  CouplingGraph g;
  g.L.assign(M, std::vector<Mat>(M));
  return g;
}

int LargeScaleSystem::state_offset(int i) const {
  int off = 0;
  for (int k = 0; k < i; ++k) off += subsystems[k].n();
  return off;
}

int LargeScaleSystem::input_offset(int i) const {
  int off = 0;
  for (int k = 0; k < i; ++k) off += subsystems[k].m();
  return off;
}

Mat LargeScaleSystem::state_selector(int i) const {
  Mat sel = Mat::Zero(subsystems[i].n(), n());
  sel.block(0, state_offset(i), subsystems[i].n(), subsystems[i].n())
      .setIdentity();
  return sel;
}

LargeScaleSystem assemble(std::vector<Subsystem> subsystems,
                          CouplingGraph coupling) {
  const int M = static_cast<int>(subsystems.size());
  if (M == 0) throw std::invalid_argument("assemble: no subsystems");
  if (coupling.L.empty()) coupling = CouplingGraph::zero(M);
  if (static_cast<int>(coupling.L.size()) != M) {
    throw std::invalid_argument("assemble: coupling graph size mismatch");
  }

  int n = 0, m = 0, p = 0;
  for (const auto& s : subsystems) {
    if (s.A.rows() != s.A.cols() || s.B.rows() != s.A.rows() ||
        s.C.cols() != s.A.rows() || s.Cz.cols() != s.A.rows() ||
        (s.E.size() > 0 && s.E.rows() != s.A.rows())) {
      throw std::invalid_argument("assemble: inconsistent subsystem dimensions");
    }
    n += s.n();
    m += s.m();
    p += s.p();
  }
  if (m != p) {
    throw std::invalid_argument("assemble: plant must be square (m == p)");
  }

  LargeScaleSystem sys;
  sys.subsystems = std::move(subsystems);
  sys.A = Mat::Zero(n, n);
  sys.B = Mat::Zero(n, m);
  sys.C = Mat::Zero(p, n);

  int ro = 0, co = 0, po = 0;
  std::vector<int> offs(M + 1, 0);
  for (int i = 0; i < M; ++i) {
    const auto& si = sys.subsystems[i];
    sys.A.block(ro, ro, si.n(), si.n()) = si.A;
    sys.B.block(ro, co, si.n(), si.m()) = si.B;
    sys.C.block(po, ro, si.p(), si.n()) = si.C;
    offs[i + 1] = offs[i] + si.n();
    ro += si.n();
    co += si.m();
    po += si.p();
  }
  sys.A_D = sys.A;

  for (int i = 0; i < M; ++i) {
    if (static_cast<int>(coupling.L[i].size()) != M) {
      throw std::invalid_argument("assemble: coupling row size mismatch");
    }
    for (int j = 0; j < M; ++j) {
      const Mat& Lij = coupling.L[i][j];
      if (Lij.size() == 0) continue;
      if (i == j) {
        if (Lij.cwiseAbs().maxCoeff() > 0.0) {
          throw std::invalid_argument("assemble: L_ii must be zero");
        }
        continue;
      }
      const auto& si = sys.subsystems[i];
      const auto& sj = sys.subsystems[j];
      if (Lij.rows() != si.p_s() || Lij.cols() != sj.p_z()) {
        throw std::invalid_argument("assemble: coupling block dimension mismatch");
      }
      sys.A.block(offs[i], offs[j], si.n(), sj.n()) = si.E * Lij * sj.Cz;
    }
  }
  sys.coupling = std::move(coupling);
  return sys;
}

bool Assumption1Report::all_pass() const {
  for (const auto& it : items) {
    if (!it.pass) return false;
  }
  return true;
}

Assumption1Report validate_assumption1(const LargeScaleSystem& sys) {
  Assumption1Report rep;

  const double rho = linalg::spectral_radius(sys.A);
  rep.items.push_back({"A_L Schur stable", rho < 1.0 - linalg::kSchurTol, rho,
                       "spectral radius"});

  const int n = sys.n();
  const int m = sys.m();
  Mat S(n + sys.p(), n + m);
  S << Mat::Identity(n, n) - sys.A, -sys.B, sys.C, Mat::Zero(sys.p(), m);
  const int rank_S = linalg::numeric_rank(S, 1e-10);
  rep.items.push_back({"system matrix full rank", rank_S == n + m,
                       static_cast<double>(rank_S),
                       "rank of [I-A,-B;C,0], need " + std::to_string(n + m)});

  const int rank_B = linalg::numeric_rank(sys.B, 1e-10);
  const int rank_C = linalg::numeric_rank(sys.C, 1e-10);
  rep.items.push_back({"B_L full rank", rank_B == m,
                       static_cast<double>(rank_B), "column rank"});
  rep.items.push_back({"C_L full rank", rank_C == sys.p(),
                       static_cast<double>(rank_C), "row rank"});

  for (int i = 0; i < sys.M(); ++i) {
    const auto& s = sys.subsystems[i];
    Mat reach(s.n(), s.n() * s.m());
    Mat term = s.B;
    for (int k = 0; k < s.n(); ++k) {
      reach.block(0, k * s.m(), s.n(), s.m()) = term;
      term = s.A * term;
    }
    // Rank threshold 1e-8 * sigma_max on the n_i-step reachability matrix.
    const int r = linalg::numeric_rank(reach, 1e-8);
    rep.items.push_back({"(A_" + std::to_string(i + 1) + ", B_" +
                             std::to_string(i + 1) + ") reachable",
                         r == s.n(), static_cast<double>(r),
                         "reachability rank, need " + std::to_string(s.n())});
  }
  return rep;
}

ReferenceTriple steady_state_from_output(const LargeScaleSystem& sys,
                                         const Vec& y_S) {
  if (y_S.size() != sys.p()) {
    throw std::invalid_argument("steady_state_from_output: y_S dimension mismatch");
  }
  const int n = sys.n();
  const int m = sys.m();
  Mat S(n + m, n + m);
  S << Mat::Identity(n, n) - sys.A, -sys.B, sys.C, Mat::Zero(sys.p(), m);
  Eigen::FullPivLU<Mat> lu(S);
  if (!lu.isInvertible()) {
    throw std::runtime_error("steady_state_from_output: singular system matrix");
  }
  Vec rhs = Vec::Zero(n + m);
  rhs.tail(m) = y_S;
  Vec sol = lu.solve(rhs);
  return {y_S, sol.head(n), sol.tail(m)};
}

StepResult step(const LargeScaleSystem& sys, const Vec& x, const Vec& u) {
  if (x.size() != sys.n() || u.size() != sys.m()) {
    throw std::invalid_argument("step: dimension mismatch");
  }
  StepResult out;
  out.x_next = sys.A * x + sys.B * u;
  out.y = sys.C * x;
  int pz = 0;
  for (const auto& s : sys.subsystems) pz += s.p_z();
  out.z = Vec::Zero(pz);
  int zo = 0, xo = 0;
  for (const auto& s : sys.subsystems) {
    out.z.segment(zo, s.p_z()) = s.Cz * x.segment(xo, s.n());
    zo += s.p_z();
    xo += s.n();
  }
  return out;
}

}  // namespace plant
}  // namespace htmpc
