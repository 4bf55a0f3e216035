#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "htmpc/closed_loop.hpp"
#include "htmpc/config_io.hpp"
#include "support/test_systems.hpp"

using namespace htmpc;
using namespace htmpc_test;

TEST_CASE("disturbance-free run sits at the fixed point") {
  auto cfg = exact_decoupled_config();
  cfg.reference.push_back({0, Vec::Ones(2)});
  auto ref = plant::steady_state_from_output(
      plant::assemble(cfg.subsystems, cfg.coupling), Vec::Ones(2));
  cfg.x0 = ref.x_S;
  cfg.run_slow_steps = 10;
  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);
  for (const auto& s : art.trace.slow) {
    CHECK(s.w_norm <= 1e-12);
  }
  for (const auto& f : art.trace.fast) {
    CHECK((f.u - ref.u_S).norm() <= 1e-7);
  }
}

TEST_CASE("exact reduction keeps the disturbance at zero from any start") {
  auto cfg = exact_decoupled_config();
  cfg.x0 = Vec(2);
  cfg.x0 << 3.0, -2.0;
  cfg.run_slow_steps = 20;
  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);
  for (const auto& s : art.trace.slow) {
    CHECK(s.w_norm <= 1e-10);
  }
  CHECK(art.report.rho_w == doctest::Approx(0.0));
  auto verdict = closed_loop::verify_trace(art);
  CHECK(verdict.all_pass());
}

TEST_CASE("coupled toy run satisfies the theorem checks") {
  auto cfg = coupled_toy_config();
  cfg.reference.push_back({0, Vec::Constant(2, 0.5)});
  cfg.x0 = Vec::Zero(2);
  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);

  for (const auto& s : art.trace.slow) {
    CHECK(s.w_norm <= art.report.rho_w + 1e-9);
    CHECK(s.rhs_identity_err <= 1e-8);
    CHECK(s.input_margin >= -1e-9);
  }
  auto verdict = closed_loop::verify_trace(art);
  for (const auto& c : verdict.claims) {
    if (c.applicable) CHECK_MESSAGE(c.pass, c.claim, ": ", c.detail);
  }

  // Reset correctness: at every slow boundary both difference states vanish,
  // so the applied correction equals the planned one exactly.
  for (const auto& f : art.trace.fast) {
    if (f.h % cfg.N_L == 0) {
      CHECK((f.du - f.du_hat).norm() == doctest::Approx(0.0));
    }
  }

  // Correction amplitude never exceeds the per-offset bound.
  for (const auto& f : art.trace.fast) {
    const int j = f.h % cfg.N_L;
    for (int i = 0; i < 2; ++i) {
      const double bound = art.report.budget.rho_delta_u(i) +
                           art.report.rho_Du(i, j);
      CHECK(f.du.segment(i, 1).norm() <= bound + 1e-9);
    }
  }
}

TEST_CASE("realized disturbance equals the projected coupling error") {
  auto cfg = coupled_toy_config();
  cfg.x0 = Vec(2);
  cfg.x0 << 1.0, -0.5;
  cfg.run_slow_steps = 8;
  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);
  const int N_L = cfg.N_L;
  const auto& sys = art.sys;

  for (const auto& s : art.trace.slow) {
    // Rebuild xhat and dxhat from the recorded inputs, then epsilon.
    const Vec x0 = art.trace.fast[static_cast<size_t>(s.k) * N_L].x;
    Vec xhat = x0;
    Vec dxhat = Vec::Zero(sys.n());
    for (int j = 0; j < N_L; ++j) {
      const auto& f = art.trace.fast[static_cast<size_t>(s.k) * N_L +
                                     static_cast<size_t>(j)];
      xhat = sys.A * xhat + sys.B * s.u_bar;
      dxhat = sys.A_D * dxhat + sys.B * f.du_hat;
    }
    Vec x_end;
    if (static_cast<size_t>(s.k + 1) * N_L < art.trace.fast.size()) {
      x_end = art.trace.fast[static_cast<size_t>(s.k + 1) * N_L].x;
    } else {
      const auto& last = art.trace.fast.back();
      x_end = sys.A * last.x + sys.B * last.u;
    }
    const Vec eps = (x_end - xhat) - dxhat;
    CHECK((art.rm.beta * eps - s.w_bar).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("identical configurations give bit-identical traces") {
  auto cfg = coupled_toy_config();
  cfg.x0 = Vec(2);
  cfg.x0 << 0.7, -0.3;
  cfg.run_slow_steps = 6;
  auto a = closed_loop::run(cfg);
  auto b = closed_loop::run(cfg);
  REQUIRE(a.trace.fast.size() == b.trace.fast.size());
  for (size_t i = 0; i < a.trace.fast.size(); ++i) {
    CHECK(a.trace.fast[i].x == b.trace.fast[i].x);
    CHECK(a.trace.fast[i].u == b.trace.fast[i].u);
  }
}

TEST_CASE("config loading, emission and re-verification") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "htmpc_io_test";
  fs::create_directories(dir);
  const fs::path cfg_path = dir / "scenario.json";
  {
    std::ofstream out(cfg_path);
    out << R"({
      "subsystems": [
        {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "Cz": [[1.0]], "E": [[1.0]]},
        {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "Cz": [[1.0]], "E": [[1.0]]}
      ],
      "coupling": [
        {"i": 0, "j": 1, "L": [[0.1]]},
        {"i": 1, "j": 0, "L": [[0.1]]}
      ],
      "reduction": {"mode": "diagonal", "n_bar": [1, 1], "decay": [0.6, 0.6]},
      "timing": {"N_L": 8, "N_H": 4, "zeta": [1, 2]},
      "input_limits": {"rho_u": [10.0, 10.0]},
      "reference": {"y_S": [0.5, 0.5]},
      "initial_state": [0.0, 0.0],
      "run_slow_steps": 12
    })";
  }
  auto cfg = config_io::load_config(cfg_path.string());
  CHECK(cfg.N_L == 8);
  CHECK(cfg.zeta == std::vector<int>{1, 2});
  CHECK(cfg.gamma1 == doctest::Approx(1.0));  // shipped defaults
  CHECK(cfg.gamma2 == doctest::Approx(0.3));

  // Loading twice gives the same scenario.
  auto cfg2 = config_io::load_config(cfg_path.string());
  CHECK(cfg.subsystems[0].A == cfg2.subsystems[0].A);
  CHECK(cfg.rho_u == cfg2.rho_u);

  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);
  auto verdict = closed_loop::verify_trace(art);
  config_io::emit(art, verdict, (dir / "out").string());

  CHECK(fs::exists(dir / "out" / "trace.csv"));
  CHECK(fs::exists(dir / "out" / "slow.csv"));
  CHECK(fs::exists(dir / "out" / "report.json"));

  auto summary = config_io::load_summary((dir / "out").string());
  auto verdict2 = closed_loop::verify_summary(summary);
  REQUIRE(verdict2.claims.size() == verdict.claims.size());
  for (size_t i = 0; i < verdict.claims.size(); ++i) {
    CHECK(verdict2.claims[i].pass == verdict.claims[i].pass);
    CHECK(verdict2.claims[i].applicable == verdict.claims[i].applicable);
  }
}

TEST_CASE("invalid resampling periods are rejected with the timing relation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "htmpc_io_test";
  fs::create_directories(dir);
  const fs::path path = dir / "bad_zeta.json";
  {
    std::ofstream out(path);
    out << R"({
      "subsystems": [{"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "Cz": [[1.0]], "E": [[1.0]]}],
      "timing": {"N_L": 8, "N_H": 3, "zeta": [3]},
      "input_limits": {"rho_u": [5.0]}
    })";
  }
  bool threw = false;
  try {
    config_io::load_config(path.string());
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("N_L") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("missing coupling defaults to a decoupled plant") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "htmpc_io_test";
  fs::create_directories(dir);
  const fs::path path = dir / "no_coupling.json";
  {
    std::ofstream out(path);
    out << R"({
      "subsystems": [
        {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "Cz": [[1.0]], "E": [[1.0]]},
        {"A": [[0.4]], "B": [[1.0]], "C": [[1.0]], "Cz": [[1.0]], "E": [[1.0]]}
      ],
      "timing": {"N_L": 4, "N_H": 3},
      "input_limits": {"rho_u": [5.0, 5.0]}
    })";
  }
  auto cfg = config_io::load_config(path.string());
  auto sys = plant::assemble(cfg.subsystems, cfg.coupling);
  CHECK((sys.A - sys.A_D).norm() == doctest::Approx(0.0));
}

TEST_CASE("an injected input spike fails claim (ii) naming the fast step") {
  auto cfg = coupled_toy_config();
  cfg.x0 = Vec::Zero(2);
  cfg.reference.push_back({0, Vec::Constant(2, 0.4)});
  cfg.run_slow_steps = 6;
  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);
  auto summary = closed_loop::make_summary(art);
  summary.input_margin[3] = -0.7;  // spike breaching the limit
  summary.worst_margin_h[3] = 3 * cfg.N_L + 2;
  auto verdict = closed_loop::verify_summary(summary);
  const auto& claim2 = verdict.claims[1];
  CHECK_FALSE(claim2.pass);
  CHECK(claim2.detail.find("h = " + std::to_string(3 * cfg.N_L + 2)) !=
        std::string::npos);
}

TEST_CASE("reference switches are tracked") {
  auto cfg = exact_decoupled_config();
  cfg.run_slow_steps = 30;
  cfg.reference.push_back({0, Vec::Zero(2)});
  cfg.reference.push_back({15, Vec::Constant(2, 1.0)});
  cfg.x0 = Vec::Zero(2);
  auto art = closed_loop::run(cfg);
  REQUIRE(art.trace.completed);
  CHECK(art.trace.slow[15].reference_switch);
  auto ref = plant::steady_state_from_output(art.sys, Vec::Constant(2, 1.0));
  const auto& last = art.trace.fast.back();
  Vec x_final = art.sys.A * last.x + art.sys.B * last.u;
  CHECK((x_final - ref.x_S).norm() <= 1e-6 * 3.0);
}
