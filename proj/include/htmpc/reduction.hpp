#pragma once

#include <string>
#include <vector>

#include "htmpc/plant.hpp"

namespace htmpc {
namespace reduction {

/// Reduced-order surrogate connected to the plant by x_bar = beta x, matched
/// in steady state: G_H(1) = beta (I - A_L)^{-1} B_L.
struct ReducedModel {
  std::vector<Mat> beta_blocks;  // beta_i, n_bar_i x n_i
  Mat beta;                      // block diagonal
  Mat A_H;
  Mat B_H;
  std::vector<Mat> C_H_blocks;
  Mat C_H;  // block diagonal
  Vec x_bar_S;  // set once a reference is chosen (beta * x_S)

  int n_bar() const { return static_cast<int>(A_H.rows()); }
  int reduced_offset(int i) const;
  /// Selector picking block i of the reduced state (n_bar_i x n_bar).
  Mat reduced_selector(int i) const;
};

/// Projection for one subsystem: kernel inside Ker C_ii, transversal to
/// Im G~(1) with G~(z) = (zI - A_ii)^{-1} [B_ii E_i] (or B_ii only when
/// b_only is set, the less conservative variant that then requires the
/// collective transversality post-check). Throws when no kernel of the
/// requested dimension exists.
Mat build_beta(const plant::Subsystem& sub, int n_bar_i, bool b_only = false);

/// Collective post-check for the b_only variant:
/// (Im (I-A_L)^{-1} B_L intersect Ker C_L) intersect prod Ker beta_i = {0}.
bool kernel_transversality_ok(const plant::LargeScaleSystem& sys,
                              const std::vector<Mat>& betas);

/// Assembles the reduced model from the projections and a caller-supplied
/// Schur-stable A_H: B_H = (I - A_H) beta (I - A_L)^{-1} B_L, and C_H solved
/// blockwise from C_H^{ii} beta_i = C_L^{ii}.
ReducedModel build_reduced_model(const plant::LargeScaleSystem& sys,
                                 const std::vector<Mat>& betas, const Mat& A_H);

/// Heuristic A_H seed: per subsystem, the top n_bar_i singular values of the
/// reachability matrix of (A_ii, B_ii), returned as a diagonal. The values are
/// not guaranteed inside the unit circle; callers must check before use.
Vec reachability_decay_heuristic(const plant::LargeScaleSystem& sys,
                                 const std::vector<int>& n_bar);

struct Assumption2Item {
  std::string name;
  bool pass = false;
  double witness = 0.0;
};

struct Assumption2Report {
  std::vector<Assumption2Item> items;
  bool all_pass() const;
};

/// Residual checks: rho(A_H), beta_i row ranks, ||C_H beta - C_L||,
/// ||G_L_hat(1) - G_H(1)||, sigma_min(G_H(1)).
Assumption2Report validate_assumption2(const ReducedModel& rm,
                                       const plant::LargeScaleSystem& sys);

}  // namespace reduction
}  // namespace htmpc
