#pragma once

#include <optional>

#include "htmpc/linalg.hpp"

namespace htmpc {
namespace qp {

/// min 0.5 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
/// H must be symmetric (within 1e-10) and positive semidefinite (eigenvalues
/// above -1e-8); matrices may be empty (0 rows) when a block is absent.
struct QuadProgram {
  Mat H;
  Vec g;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;

  int num_vars() const { return static_cast<int>(g.size()); }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

const char* to_string(SolveStatus s);

struct Result {
  Vec x;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  double objective = 0.0;
};

/// Primal active-set solver. Feasibility is established by a phase-1 linear
/// program, never by iteration timeout. Zero-curvature directions of a
/// semidefinite H are followed to the nearest blocking constraint, so convex
/// problems with singular Hessian blocks are handled. Deterministic: fixed
/// iteration order, lowest-index tie breaking.
Result solve(const QuadProgram& prog, double tol = 1e-8,
             const std::optional<Vec>& feasible_start = std::nullopt);

/// max c'x  s.t.  A_in x <= b_in,  A_eq x = b_eq. Two-phase dense simplex with
/// Bland's rule. Distinguishes Infeasible from Unbounded.
Result solve_lp(const Vec& c, const Mat& A_in, const Vec& b_in,
                const Mat& A_eq = Mat(), const Vec& b_eq = Vec());

}  // namespace qp
}  // namespace htmpc
