#pragma once

#include <string>
#include <vector>

#include "htmpc/linalg.hpp"

namespace htmpc {
namespace plant {

/// One interacting subsystem: x+ = A x + B u + E s, y = C x, z = Cz x.
struct Subsystem {
  Mat A;   // n_i x n_i
  Mat B;   // n_i x m_i
  Mat E;   // n_i x p_si
  Mat C;   // p_i x n_i
  Mat Cz;  // p_zi x n_i

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }
  int p_s() const { return static_cast<int>(E.cols()); }
  int p_z() const { return static_cast<int>(Cz.rows()); }
};

/// Coupling gains s_i = sum_j L_ij z_j with L_ii = 0. An empty matrix stands
/// for a zero block.
struct CouplingGraph {
  std::vector<std::vector<Mat>> L;  // L[i][j], p_si x p_zj

  static CouplingGraph zero(int M);
};

struct LargeScaleSystem {
  std::vector<Subsystem> subsystems;
  CouplingGraph coupling;
  Mat A;    // collective state matrix
  Mat B;    // block diagonal input matrix
  Mat C;    // block diagonal output matrix
  Mat A_D;  // block diagonal part of A

  int M() const { return static_cast<int>(subsystems.size()); }
  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }

  /// Offset of subsystem i's state block in the collective state.
  int state_offset(int i) const;
  int input_offset(int i) const;
  /// Selector picking subsystem i's block of the collective state (n_i x n).
  Mat state_selector(int i) const;
};

/// Builds the collective matrices. Throws on dimension mismatch, nonzero L_ii,
/// or a non-square plant (m != p).
LargeScaleSystem assemble(std::vector<Subsystem> subsystems,
                          CouplingGraph coupling);

struct Assumption1Item {
  std::string name;
  bool pass = false;
  double witness = 0.0;
  std::string detail;
};

struct Assumption1Report {
  std::vector<Assumption1Item> items;
  bool all_pass() const;
};

/// Checks Schur stability of A, full rank of the system matrix
/// [I-A, -B; C, 0], full rank of B and C, and per-subsystem reachability.
/// Failures are reported, never thrown.
Assumption1Report validate_assumption1(const LargeScaleSystem& sys);

struct ReferenceTriple {
  Vec y_S;
  Vec x_S;
  Vec u_S;
};

/// Solves [I-A, -B; C, 0] (x_S, u_S) = (0, y_S). Throws std::runtime_error
/// when the system matrix is singular.
ReferenceTriple steady_state_from_output(const LargeScaleSystem& sys,
                                         const Vec& y_S);

struct StepResult {
  Vec x_next;
  Vec y;
  Vec z;  // stacked coupling outputs z_i = Cz_i x_i
};

StepResult step(const LargeScaleSystem& sys, const Vec& x, const Vec& u);

}  // namespace plant
}  // namespace htmpc
