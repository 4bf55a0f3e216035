#include <doctest.h>

#include <random>

#include "htmpc/ll_controller.hpp"
#include "htmpc/tuning.hpp"
#include "support/oracles.hpp"
#include "support/test_systems.hpp"

using namespace htmpc;
using namespace htmpc_test;

namespace {

// One scalar subsystem A = 0.5, B = 1 reduced with beta = 1, A_H = 0.6
// (so B_H = 0.8 by steady-state matching).
struct ScalarMismatch {
  plant::LargeScaleSystem sys;
  reduction::ReducedModel rm;
};

ScalarMismatch scalar_mismatch() {
  ScalarMismatch s;
  s.sys = plant::assemble({scalar_subsystem(0.5, 1.0)},
                          plant::CouplingGraph::zero(1));
  s.rm = reduction::build_reduced_model(s.sys, {Mat::Identity(1, 1)},
                                        Mat::Constant(1, 1, 0.6));
  return s;
}

reduction::ReducedModel exact_reduction(const plant::LargeScaleSystem& sys) {
  std::vector<Mat> betas;
  for (const auto& sub : sys.subsystems) {
    betas.push_back(Mat::Identity(sub.n(), sub.n()));
  }
  return reduction::build_reduced_model(sys, betas, sys.A);
}

}  // namespace

TEST_CASE("timing validation") {
  auto t = tuning::make_timing(8, 3, {1, 2, 4});
  CHECK(t.N == std::vector<int>{8, 4, 2});
  CHECK_THROWS_AS(tuning::make_timing(8, 3, {3}), std::invalid_argument);
  CHECK_THROWS_AS(tuning::make_timing(0, 3, {1}), std::invalid_argument);
}

TEST_CASE("mismatch operators") {
  {
    auto sys = two_scalar_coupled();
    auto rm = exact_reduction(sys);
    auto mo = tuning::mismatch_operators(sys, rm, 4);
    CHECK(mo.A_mis.norm() == doctest::Approx(0.0));
    CHECK(mo.B_mis.norm() == doctest::Approx(0.0));
    CHECK(mo.kappa == doctest::Approx(0.0));
  }
  {
    auto s = scalar_mismatch();
    auto mo = tuning::mismatch_operators(s.sys, s.rm, 2);
    CHECK(mo.B_mis(0, 0) == doctest::Approx(-0.22));
    CHECK(mo.kappa == doctest::Approx(0.22));
  }
  {
    // kappa decay bound from the steady-state-matched tail sums.
    auto s = scalar_mismatch();
    const Mat G_H = (Mat::Identity(1, 1) - s.rm.A_H).lu().solve(s.rm.B_H);
    const Mat G_L = (Mat::Identity(1, 1) - s.sys.A).lu().solve(s.sys.B);
    for (int N_L : {2, 4, 8, 16}) {
      auto mo = tuning::mismatch_operators(s.sys, s.rm, N_L);
      const double bound =
          linalg::spectral_norm(linalg::matrix_power(s.rm.A_H, N_L)) *
              linalg::spectral_norm(G_H) +
          linalg::spectral_norm(linalg::matrix_power(s.sys.A, N_L)) *
              linalg::spectral_norm(s.rm.beta) * linalg::spectral_norm(G_L);
      CHECK(mo.kappa <= bound + 1e-12);
    }
  }
}

TEST_CASE("reach projections") {
  {
    auto sub = scalar_subsystem(0.5, 1.0);
    auto rp = tuning::reach_projection(sub, Mat::Identity(1, 1), 1, 2);
    REQUIRE(rp.H.cols() == 2);
    CHECK(rp.H(0, 0) == doctest::Approx(1.0));
    CHECK(rp.H(0, 1) == doctest::Approx(0.5));
    CHECK(rp.sigma_min == doctest::Approx(std::sqrt(1.25)));
  }
  {
    auto sub = scalar_subsystem(0.5, 1.0);
    auto rp = tuning::reach_projection(sub, Mat::Zero(1, 1), 1, 2);
    CHECK(rp.sigma_min == doctest::Approx(0.0));
  }
  {
    auto sub = scalar_subsystem(0.5, 1.0);
    auto rp = tuning::reach_projection(sub, Mat::Identity(1, 1), 2, 1);
    CHECK(rp.H(0, 0) == doctest::Approx(1.5));  // resampled input matrix
  }
}

TEST_CASE("fast state bounds and the disturbance radius") {
  {
    auto sys = plant::assemble({scalar_subsystem(0.5, 1.0)},
                               plant::CouplingGraph::zero(1));
    auto fb = tuning::fast_state_bounds(sys, Mat::Identity(1, 1), sys.A,
                                        Vec::Ones(1), 4);
    CHECK(fb.per_subsystem(0, 1) == doctest::Approx(1.0));
    CHECK(fb.per_subsystem(0, 2) == doctest::Approx(1.5));
    CHECK(fb.per_subsystem(0, 3) == doctest::Approx(1.75));
    CHECK(fb.rho_w == doctest::Approx(0.0));  // no coupling
  }
}

TEST_CASE("rho_w dominates the sampled disturbance oracle") {
  auto sys = two_scalar_coupled();
  auto rm = exact_reduction(sys);
  auto timing = tuning::make_timing(6, 3, {1, 2});
  auto gains = ll::design_gains(
      sys, {Mat::Identity(1, 1), Mat::Identity(1, 1)},
      {Mat::Identity(1, 1), Mat::Identity(1, 1)});
  Vec rho_du = Vec::Constant(2, 1.0);
  auto fb = tuning::fast_state_bounds(sys, rm.beta, gains.F_L, rho_du, 6);
  REQUIRE(fb.rho_w > 0.0);

  tuning::Budget budget;
  budget.rho_delta_u = rho_du;
  budget.rho_u_bar = Vec::Zero(2);
  budget.rho_u = Vec::Constant(2, 10.0);
  auto design = ll::finalize_design(sys, rm, timing, gains, budget,
                                    {Mat::Identity(1, 1), Mat::Identity(1, 1)},
                                    {Mat::Identity(1, 1), Mat::Identity(1, 1)});
  std::mt19937 rng(97);
  const double sampled =
      sampled_disturbance_max(sys, rm.beta, gains.F_L, design, 2000, rng);
  CHECK(sampled <= fb.rho_w + 1e-12);
  CHECK(sampled > 0.0);
}

TEST_CASE("coupling compensation matrix") {
  auto one = plant::assemble({scalar_subsystem(0.5, 1.0)},
                             plant::CouplingGraph::zero(1));
  CHECK(tuning::lambda_matrix(one, {Mat::Identity(1, 1)}, one.A, 6).norm() ==
        doctest::Approx(0.0));

  auto sys = two_scalar_coupled();
  std::vector<Mat> zero_gains{Mat::Zero(1, 1), Mat::Zero(1, 1)};
  CHECK(tuning::lambda_matrix(sys, zero_gains, sys.A, 6).norm() ==
        doctest::Approx(0.0));

  std::vector<Mat> gains{Mat::Constant(1, 1, -0.2), Mat::Constant(1, 1, -0.2)};
  CHECK(tuning::lambda_matrix(sys, gains, sys.A, 2).norm() ==
        doctest::Approx(0.0));  // empty sum for N_L = 2
  CHECK(tuning::lambda_matrix(sys, gains, sys.A, 8).minCoeff() >= 0.0);
}

TEST_CASE("budget split") {
  {
    auto b = tuning::solve_budget_lp(Vec::Ones(2), Mat::Zero(2, 2), 0.0,
                                     Vec::Ones(2), {4, 4}, 1.0, 0.0);
    CHECK(b.rho_delta_u(0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(b.rho_delta_u(1) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(b.rho_u_bar.norm() <= 1e-6);
  }
  {
    CHECK_THROWS_AS(
        tuning::solve_budget_lp(Vec::Ones(2), Mat::Zero(2, 2), 1e6,
                                Vec::Ones(2), {4, 4}),
        tuning::BudgetInfeasible);
  }
  {
    // Re-substitution of the returned split into both constraint families.
    std::mt19937 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const int M = 2 + static_cast<int>(rng() % 2);
      Vec rho_u(M), sig(M);
      std::vector<int> N;
      for (int i = 0; i < M; ++i) {
        rho_u(i) = 2.0 + 8.0 * u(rng);
        sig(i) = 0.5 + u(rng);
        N.push_back(2 + static_cast<int>(rng() % 4));
      }
      Mat Lambda = Mat::Zero(M, M);
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) Lambda(i, j) = 0.05 * u(rng);
      }
      const double kappa = 0.2 * u(rng);
      tuning::Budget b;
      try {
        b = tuning::solve_budget_lp(rho_u, Lambda, kappa, sig, N);
      } catch (const tuning::BudgetInfeasible&) {
        continue;
      }
      for (int i = 0; i < M; ++i) {
        const double lhs = kappa / (std::sqrt(static_cast<double>(N[i])) * sig(i)) *
                           b.rho_u_bar.sum();
        CHECK(b.rho_delta_u(i) > lhs);  // strict matrix inequality
      }
      Vec used = (Lambda + Mat::Identity(M, M)) * b.rho_delta_u + b.rho_u_bar;
      CHECK((used.array() <= rho_u.array() + 1e-7).all());
      CHECK(b.rho_u_bar_total == doctest::Approx(b.rho_u_bar.norm()));
      CHECK(b.varrho_u == doctest::Approx(rho_u.norm()));
    }
  }
}

TEST_CASE("total correction sets") {
  {
    auto sys = plant::assemble({scalar_subsystem(0.5, 1.0)},
                               plant::CouplingGraph::zero(1));
    tuning::Budget b;
    b.rho_delta_u = Vec::Ones(1);
    b.rho_u_bar = Vec::Ones(1);
    b.rho_u = Vec::Constant(1, 5.0);
    auto fb = tuning::fast_state_bounds(sys, Mat::Identity(1, 1), sys.A,
                                        b.rho_delta_u, 6);
    auto du = tuning::delta_u_sets(sys, {Mat::Identity(1, 1)}, sys.A, b, fb, 6);
    CHECK(du.rho_Du.norm() == doctest::Approx(0.0));  // single subsystem
    CHECK(du.inclusion_ok);
  }
  {
    auto sys = two_scalar_coupled();
    auto gains = ll::design_gains(
        sys, {Mat::Identity(1, 1), Mat::Identity(1, 1)},
        {Mat::Identity(1, 1), Mat::Identity(1, 1)});
    tuning::Budget b;
    b.rho_delta_u = Vec::Ones(2);
    b.rho_u_bar = Vec::Ones(2);
    b.rho_u = Vec::Constant(2, 10.0);
    auto fb = tuning::fast_state_bounds(sys, Mat::Identity(2, 2), gains.F_L,
                                        b.rho_delta_u, 8);
    auto du = tuning::delta_u_sets(sys, gains.K_blocks, gains.F_L, b, fb, 8);
    CHECK(du.rho_Du.col(0).norm() == doctest::Approx(0.0));
    CHECK(du.rho_Du.col(1).norm() == doctest::Approx(0.0));
    for (int i = 0; i < 2; ++i) {
      for (int j = 2; j < 7; ++j) {
        CHECK(du.rho_Du(i, j + 1) >= du.rho_Du(i, j) - 1e-12);  // monotone
      }
    }
  }
}

TEST_CASE("feasibility radii and contraction constants") {
  {
    // Exact reduction: chi = 0 and lambda unbounded.
    auto sys = two_scalar_coupled();
    auto rm = exact_reduction(sys);
    auto timing = tuning::make_timing(8, 3, {1, 2});
    tuning::Budget b;
    b.rho_delta_u = Vec::Ones(2);
    b.rho_u_bar = Vec::Ones(2);
    b.rho_u = Vec::Constant(2, 10.0);
    b.rho_u_bar_total = b.rho_u_bar.norm();
    b.varrho_u = b.rho_u.norm();
    Vec sig = Vec::Ones(2);
    auto cl = tuning::chi_and_lambda(0.0, 0.0, 1.0, 0.5, sig, timing.N, b, 8);
    CHECK(cl.chi.norm() == doctest::Approx(0.0));
    CHECK(std::isinf(cl.lambda(0)));
  }
  {
    tuning::Budget b;
    b.rho_delta_u = Vec::Constant(1, 0.01);
    b.rho_u_bar = Vec::Ones(1);
    b.rho_u = Vec::Ones(1);
    b.rho_u_bar_total = 1.0;
    b.varrho_u = 1.0;
    CHECK_THROWS(tuning::chi_and_lambda(10.0, 0.5, 1.0, 0.5, Vec::Ones(1), {4},
                                        b, 4));
  }
}

TEST_CASE("small gain constants") {
  {
    // Exact reduction, zero coupling, zero ancillary gain: sigma must vanish.
    auto sys = plant::assemble(
        {scalar_subsystem(0.5, 1.0), scalar_subsystem(0.4, 1.0)},
        plant::CouplingGraph::zero(2));
    auto rm = exact_reduction(sys);
    const int N_L = 4;
    Mat K_H = Mat::Zero(2, 2);
    Mat F_L_NL = linalg::matrix_power(sys.A, N_L);
    std::vector<Mat> K_blocks{Mat::Zero(1, 1), Mat::Zero(1, 1)};
    auto sg = tuning::small_gain_sigma(sys, rm, K_H, F_L_NL, K_blocks, sys.A,
                                       Mat::Identity(2, 2),
                                       Mat::Identity(2, 2), Vec::Ones(2), N_L);
    CHECK(sg.kappa_x == doctest::Approx(0.0));
    CHECK(sg.sigma == doctest::Approx(0.0));
    CHECK(sg.norm_BC > 0.0);
  }
  {
    // Factor-by-factor cross-checks on the coupled toy.
    auto sys = two_scalar_coupled();
    auto rm = reduction::build_reduced_model(
        sys, {Mat::Identity(1, 1), Mat::Identity(1, 1)},
        Mat(0.6 * Mat::Identity(2, 2)));
    const int N_L = 4;
    auto gains = ll::design_gains(
        sys, {Mat::Identity(1, 1), Mat::Identity(1, 1)},
        {Mat::Identity(1, 1), Mat::Identity(1, 1)});
    Mat K_H = Mat::Constant(2, 2, 0.0);
    K_H(0, 0) = -0.1;
    K_H(1, 1) = -0.1;
    Mat B_L_NL = linalg::matrix_power_sum(sys.A, sys.B, N_L);
    Mat F_L_NL = linalg::matrix_power(sys.A, N_L) + B_L_NL * K_H * rm.beta;
    REQUIRE(linalg::is_schur(F_L_NL));
    auto sg = tuning::small_gain_sigma(sys, rm, K_H, F_L_NL, gains.K_blocks,
                                       gains.F_L, Mat::Identity(2, 2),
                                       Mat::Identity(2, 2), Vec::Ones(2), N_L);

    // ||B_C|| equals the reachability-matrix norm (block permutation).
    Mat R_NL(2, N_L * 2);
    Mat term = sys.B;
    for (int r = 0; r < N_L; ++r) {
      R_NL.block(0, r * 2, 2, 2) = term;
      term = sys.A * term;
    }
    CHECK(sg.norm_BC == doctest::Approx(linalg::spectral_norm(R_NL)));

    // ||A_mis + B_mis K_H beta|| recomputed from the raw operators.
    auto mo = tuning::mismatch_operators(sys, rm, N_L);
    CHECK(sg.norm_mix ==
          doctest::Approx(linalg::spectral_norm(mo.A_mis + mo.B_mis * K_H * rm.beta)));

    // kappa_u by simulating the correction recursions column by column.
    const int n = 2, m = 2;
    Mat map = Mat::Zero(N_L * m, N_L * m);
    for (int col = 0; col < N_L * m; ++col) {
      Vec impulse = Vec::Zero(N_L * m);
      impulse(col) = 1.0;
      Vec dxhat = Vec::Zero(n), eps = Vec::Zero(n);
      for (int j = 0; j < N_L; ++j) {
        const Vec du_hat = impulse.segment(j * m, m);
        const Vec du = du_hat + gains.K * eps;
        map.block(j * m, col, m, 1) = du;
        eps = gains.F_L * eps + (sys.A - sys.A_D) * dxhat;
        dxhat = sys.A_D * dxhat + sys.B * du_hat;
      }
    }
    CHECK(sg.kappa_u == doctest::Approx(linalg::spectral_norm(map)).epsilon(1e-9));

    // sigma is the product of kappa_x and the norm series.
    CHECK(sg.sigma == doctest::Approx(sg.kappa_x * sg.series_sum));
    CHECK(sg.kappa_x ==
          doctest::Approx(sg.kappa_u * sg.kappa_bar * sg.norm_BC * sg.norm_mix));

    // Lower bound the series by partial sums.
    double partial = 0.0;
    Mat P = Mat::Identity(2, 2);
    for (int kk = 0; kk < 12; ++kk) {
      partial += linalg::spectral_norm(P);
      P = P * F_L_NL;
    }
    CHECK(sg.series_sum >= partial - 1e-12);
  }
}

TEST_CASE("offline report aggregation") {
  {
    auto cfg = exact_decoupled_config();
    auto off = closed_loop::offline(cfg);
    CHECK(off.report.overall_pass);
    CHECK(off.report.kappa == doctest::Approx(0.0));
    CHECK(off.report.norm_A_mis == doctest::Approx(0.0));
    CHECK(off.report.rho_w == doctest::Approx(0.0));
  }
  {
    // Schur but with ||A_L|| >= 1: the norm condition fails at N_L = 1.
    plant::Subsystem s;
    s.A = Mat::Zero(2, 2);
    s.A << 0.5, 0.9, 0.0, 0.5;
    s.B = Mat::Identity(2, 2);
    s.E = Mat::Zero(2, 1);
    s.C = Mat::Identity(2, 2);
    s.Cz = Mat::Zero(1, 2);
    auto sys = plant::assemble({s}, plant::CouplingGraph::zero(1));
    auto rm = exact_reduction(sys);
    auto timing = tuning::make_timing(1, 3, {1});
    auto gains = ll::design_gains(sys, {Mat::Identity(2, 2)},
                                  {Mat::Identity(2, 2)});
    auto rep = tuning::assumption3_report(sys, rm, timing, gains.K_blocks,
                                          gains.F_L, Vec::Constant(1, 5.0));
    CHECK_FALSE(rep.item1_norm_pass);
    CHECK_FALSE(rep.overall_pass);
  }
}

TEST_CASE("monotone sweep on the coupled toy") {
  auto cfg = coupled_toy_config();
  std::vector<double> kappas, chis, lambdas;
  for (int N_L : {4, 8, 16, 32}) {
    auto c2 = cfg;
    c2.N_L = N_L;
    auto off = closed_loop::offline(c2);
    REQUIRE(off.report.budget_feasible);
    kappas.push_back(off.report.kappa);
    chis.push_back(off.report.chi.size() ? off.report.chi.maxCoeff() : 0.0);
    lambdas.push_back(off.report.lambda_feas.size()
                          ? off.report.lambda_feas.minCoeff()
                          : 0.0);
  }
  for (size_t i = 0; i + 1 < kappas.size(); ++i) {
    CHECK(kappas[i + 1] <= kappas[i] + 1e-12);
    CHECK(chis[i + 1] <= chis[i] + 1e-12);
    CHECK(lambdas[i + 1] >= lambdas[i] - 1e-12);
  }
}
