#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "htmpc/config_io.hpp"

namespace {

using namespace htmpc;

int cmd_validate(const std::string& config_path) {
  auto cfg = config_io::load_config(config_path);
  auto sys = plant::assemble(cfg.subsystems, cfg.coupling);
  closed_loop::apply_defaults(cfg);

  auto a1 = plant::validate_assumption1(sys);
  std::printf("standing assumptions on the plant:\n");
  for (const auto& it : a1.items) {
    std::printf("  [%s] %-38s witness=%.6g (%s)\n", it.pass ? "PASS" : "FAIL",
                it.name.c_str(), it.witness, it.detail.c_str());
  }

  bool a2_ok = true;
  try {
    closed_loop::ScenarioConfig c2 = cfg;
    auto off = closed_loop::offline(c2);
    auto a2 = reduction::validate_assumption2(off.rm, off.sys);
    std::printf("reduced-model compatibility:\n");
    for (const auto& it : a2.items) {
      std::printf("  [%s] %-38s witness=%.6g\n", it.pass ? "PASS" : "FAIL",
                  it.name.c_str(), it.witness);
    }
    a2_ok = a2.all_pass();
  } catch (const std::exception& e) {
    std::printf("reduced-model construction failed: %s\n", e.what());
    a2_ok = false;
  }
  return (a1.all_pass() && a2_ok) ? 0 : 1;
}

int cmd_tune(const std::string& config_path, const std::string& sweep) {
  auto cfg = config_io::load_config(config_path);

  std::vector<int> nl_values{cfg.N_L};
  if (!sweep.empty()) {
    int a = 0, b = 0, step = 1;
    if (std::sscanf(sweep.c_str(), "%d:%d:%d", &a, &b, &step) != 3 || step <= 0) {
      std::fprintf(stderr, "tune: --nl-sweep expects a:b:step\n");
      return 2;
    }
    nl_values.clear();
    for (int v = a; v <= b; v += step) nl_values.push_back(v);
  }

  bool all_pass = true;
  bool first = true;
  for (int N_L : nl_values) {
    bool divisible = true;
    for (int z : cfg.zeta) divisible = divisible && (z >= 1 && N_L % z == 0);
    if (!divisible) {
      std::fprintf(stderr,
                   "tune: skipping N_L=%d (zeta must divide N_L: h = zeta_i "
                   "l_i = k N_L)\n",
                   N_L);
      continue;
    }
    closed_loop::ScenarioConfig c2 = cfg;
    c2.N_L = N_L;
    auto off = closed_loop::offline(c2);
    if (!first) std::printf("\n");
    std::printf("%s\n", config_io::tuning_report_json(off.report).c_str());
    all_pass = all_pass && off.report.overall_pass;
    first = false;
  }
  return all_pass ? 0 : 1;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  auto cfg = config_io::load_config(config_path);
  auto artifacts = closed_loop::run(cfg);
  auto verdict = closed_loop::verify_trace(artifacts);
  config_io::emit(artifacts, verdict, out_dir);
  std::printf("trace: %zu fast steps, %zu slow steps, %s\n",
              artifacts.trace.fast.size(), artifacts.trace.slow.size(),
              artifacts.trace.completed ? "completed"
                                        : artifacts.trace.failure.c_str());
  for (const auto& c : verdict.claims) {
    std::printf("  [%s] %s%s%s\n",
                !c.applicable ? "n/a " : (c.pass ? "PASS" : "FAIL"),
                c.claim.c_str(), c.detail.empty() ? "" : " -- ",
                c.detail.c_str());
  }
  return (artifacts.trace.completed && verdict.all_pass()) ? 0 : 1;
}

int cmd_report(const std::string& dir) {
  auto summary = config_io::load_summary(dir);
  auto verdict = closed_loop::verify_summary(summary);
  std::printf("theorem verdicts for %s:\n", dir.c_str());
  for (const auto& c : verdict.claims) {
    std::printf("  [%s] %s%s%s\n",
                !c.applicable ? "n/a " : (c.pass ? "PASS" : "FAIL"),
                c.claim.c_str(), c.detail.empty() ? "" : " -- ",
                c.detail.c_str());
  }
  return verdict.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "htmpc: two-layer hierarchical multirate MPC for interconnected "
      "linear systems"};
  app.require_subcommand(1);

  std::string config_path, out_dir, report_dir, sweep;

  auto* validate = app.add_subcommand(
      "validate", "check the standing assumptions of a scenario");
  validate->add_option("config", config_path, "scenario JSON")->required();

  auto* tune = app.add_subcommand(
      "tune", "run the offline tuning pipeline and print the report");
  tune->add_option("config", config_path, "scenario JSON")->required();
  tune->add_option("--nl-sweep", sweep, "evaluate N_L over a:b:step");

  auto* simulate =
      app.add_subcommand("simulate", "closed-loop run with trace emission");
  simulate->add_option("config", config_path, "scenario JSON")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand(
      "report", "re-evaluate the theorem verdicts of an emitted run");
  report->add_option("dir", report_dir, "directory written by simulate")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (tune->parsed()) return cmd_tune(config_path, sweep);
    if (simulate->parsed()) return cmd_simulate(config_path, out_dir);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
