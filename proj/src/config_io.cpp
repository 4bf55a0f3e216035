#include "htmpc/config_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace htmpc {
namespace config_io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("config: " + path + ": " + what);
}

Mat parse_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    fail(path, "expected a nested array (row-major matrix)");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) fail(path, "ragged rows");
    for (int c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) fail(path, "non-numeric entry");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Vec parse_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  Vec v(static_cast<int>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(path, "non-numeric entry");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

void write_csv_value(std::FILE* f, double v, bool first) {
  std::fprintf(f, first ? "%.17g" : ",%.17g", v);
}

}  // namespace

closed_loop::ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: JSON parse error: " + std::string(e.what()));
  }

  closed_loop::ScenarioConfig cfg;

  if (!j.contains("subsystems") || !j["subsystems"].is_array() ||
      j["subsystems"].empty()) {
    fail("subsystems", "required non-empty array");
  }
  int idx = 0;
  for (const auto& js : j["subsystems"]) {
    const std::string base = "subsystems[" + std::to_string(idx) + "]";
    plant::Subsystem s;
    if (!js.contains("A")) fail(base + ".A", "missing");
    s.A = parse_matrix(js["A"], base + ".A");
    if (!js.contains("B")) fail(base + ".B", "missing");
    s.B = parse_matrix(js["B"], base + ".B");
    s.C = js.contains("C") ? parse_matrix(js["C"], base + ".C")
                           : Mat(Mat::Identity(s.A.rows(), s.A.rows()));
    s.Cz = js.contains("Cz") ? parse_matrix(js["Cz"], base + ".Cz")
                             : Mat(Mat::Identity(s.A.rows(), s.A.rows()));
    s.E = js.contains("E") ? parse_matrix(js["E"], base + ".E")
                           : Mat(Mat::Identity(s.A.rows(), s.A.rows()));
    cfg.subsystems.push_back(std::move(s));
    ++idx;
  }
  const int M = static_cast<int>(cfg.subsystems.size());

  cfg.coupling = plant::CouplingGraph::zero(M);  // missing blocks mean none
  if (j.contains("coupling")) {
    if (!j["coupling"].is_array()) fail("coupling", "expected an array");
    int cidx = 0;
    for (const auto& jc : j["coupling"]) {
      const std::string base = "coupling[" + std::to_string(cidx) + "]";
      if (!jc.contains("i") || !jc.contains("j") || !jc.contains("L")) {
        fail(base, "entries need i, j, L");
      }
      const int ci = jc["i"].get<int>();
      const int cj = jc["j"].get<int>();
      if (ci < 0 || ci >= M || cj < 0 || cj >= M) fail(base, "index out of range");
      cfg.coupling.L[ci][cj] = parse_matrix(jc["L"], base + ".L");
      ++cidx;
    }
  }

  if (j.contains("reduction")) {
    const auto& jr = j["reduction"];
    if (jr.contains("n_bar")) {
      for (const auto& v : jr["n_bar"]) cfg.n_bar.push_back(v.get<int>());
    }
    const std::string mode = jr.value("mode", "exact");
    if (mode == "exact") {
      cfg.ah_mode = closed_loop::AHMode::Exact;
    } else if (mode == "diagonal") {
      cfg.ah_mode = closed_loop::AHMode::Diagonal;
      if (!jr.contains("decay")) fail("reduction.decay", "required for diagonal mode");
      cfg.ah_decay = parse_vector(jr["decay"], "reduction.decay");
    } else if (mode == "matrix") {
      cfg.ah_mode = closed_loop::AHMode::Matrix;
      if (!jr.contains("A_H")) fail("reduction.A_H", "required for matrix mode");
      cfg.ah_matrix = parse_matrix(jr["A_H"], "reduction.A_H");
    } else {
      fail("reduction.mode", "must be exact, diagonal or matrix");
    }
    cfg.beta_b_only = jr.value("b_only", false);
  }

  if (!j.contains("timing")) fail("timing", "required");
  cfg.N_L = j["timing"].value("N_L", 1);
  cfg.N_H = j["timing"].value("N_H", 1);
  if (j["timing"].contains("zeta")) {
    for (const auto& v : j["timing"]["zeta"]) cfg.zeta.push_back(v.get<int>());
  }

  if (j.contains("weights")) {
    const auto& jw = j["weights"];
    if (jw.contains("Q_H")) cfg.Q_H = parse_matrix(jw["Q_H"], "weights.Q_H");
    if (jw.contains("R_H")) cfg.R_H = parse_matrix(jw["R_H"], "weights.R_H");
    if (jw.contains("lq_hl")) {
      cfg.lq_hl_Q = parse_matrix(jw["lq_hl"]["Q"], "weights.lq_hl.Q");
      cfg.lq_hl_R = parse_matrix(jw["lq_hl"]["R"], "weights.lq_hl.R");
    }
    auto parse_list = [&](const char* key, std::vector<Mat>& out) {
      if (!jw.contains(key)) return;
      int i = 0;
      for (const auto& jm : jw[key]) {
        out.push_back(parse_matrix(
            jm, std::string("weights.") + key + "[" + std::to_string(i++) + "]"));
      }
    };
    parse_list("Q_ll", cfg.Q_ll);
    parse_list("R_ll", cfg.R_ll);
    parse_list("lq_ll_Q", cfg.lq_ll_Q);
    parse_list("lq_ll_R", cfg.lq_ll_R);
  }

  if (!j.contains("input_limits")) fail("input_limits", "required");
  {
    const auto& jl = j["input_limits"];
    if (jl.contains("rho_u")) {
      cfg.rho_u = parse_vector(jl["rho_u"], "input_limits.rho_u");
      for (int i = 0; i < M; ++i) {
        cfg.U_S.emplace_back(
            sets::Ball::origin(cfg.subsystems[i].m(), cfg.rho_u(i)));
      }
    } else if (jl.contains("inf_bounds")) {
      const Vec b = parse_vector(jl["inf_bounds"], "input_limits.inf_bounds");
      if (b.size() != M) fail("input_limits.inf_bounds", "one bound per subsystem");
      cfg.rho_u = b;  // the inscribed ball of a +-b box has radius b
      for (int i = 0; i < M; ++i) {
        cfg.U_S.emplace_back(
            sets::Box::symmetric(Vec::Constant(cfg.subsystems[i].m(), b(i))));
      }
    } else {
      fail("input_limits", "needs rho_u or inf_bounds");
    }
    if (cfg.rho_u.size() != M) fail("input_limits", "one entry per subsystem");
  }

  if (j.contains("reference")) {
    const auto& jr = j["reference"];
    if (jr.contains("y_S")) {
      cfg.reference.push_back({0, parse_vector(jr["y_S"], "reference.y_S")});
    }
    if (jr.contains("schedule")) {
      int i = 0;
      for (const auto& je : jr["schedule"]) {
        const std::string base = "reference.schedule[" + std::to_string(i++) + "]";
        if (!je.contains("at_slow_step") || !je.contains("y_S")) {
          fail(base, "entries need at_slow_step and y_S");
        }
        cfg.reference.push_back({je["at_slow_step"].get<int>(),
                                 parse_vector(je["y_S"], base + ".y_S")});
      }
    }
  }

  if (j.contains("initial_state")) {
    cfg.x0 = parse_vector(j["initial_state"], "initial_state");
  }
  cfg.run_slow_steps = j.value("run_slow_steps", 50);
  cfg.mrpi_eps = j.value("mrpi_eps", 0.01);
  cfg.gamma1 = j.value("gamma1", 1.0);
  cfg.gamma2 = j.value("gamma2", 0.3);
  cfg.qp_tol = j.value("qp_tol", 1e-8);
  cfg.override_tuning_gate = j.value("override_tuning_gate", false);
  cfg.seed = j.value("seed", 0u);

  // Divisibility is validated by make_timing, but reporting it here names the
  // offending field.
  if (!cfg.zeta.empty()) {
    for (int z : cfg.zeta) {
      if (z < 1 || cfg.N_L % z != 0) {
        fail("timing.zeta",
             "each zeta_i must divide N_L (h = zeta_i l_i = k zeta_i N_i = k N_L)");
      }
    }
  }
  return cfg;
}

std::string tuning_report_json(const tuning::TuningReport& rep) {
  json j;
  j["timing"] = {{"N_L", rep.timing.N_L},
                 {"N_H", rep.timing.N_H},
                 {"zeta", rep.timing.zeta},
                 {"N", rep.timing.N}};
  j["kappa"] = rep.kappa;
  j["norm_A_mis"] = rep.norm_A_mis;
  j["norm_AL_NL"] = rep.norm_AL_NL;
  j["norm_R_NL"] = rep.norm_R_NL;
  j["A_mis"] = matrix_json(rep.A_mis);
  j["B_mis"] = matrix_json(rep.B_mis);
  j["sigma_min_H"] = vector_json(rep.sigma_min_H);
  j["chi"] = vector_json(rep.chi);
  j["lambda_feas"] = vector_json(rep.lambda_feas);
  j["Lambda"] = matrix_json(rep.Lambda);
  j["rho_dxhat"] = matrix_json(rep.rho_dxhat);
  j["rho_dxhat_collective"] = vector_json(rep.rho_dxhat_coll);
  j["rho_Du"] = matrix_json(rep.rho_Du);
  j["rho_w"] = rep.rho_w;
  j["inclusion_margin"] = rep.inclusion_margin;
  j["budget_feasible"] = rep.budget_feasible;
  if (rep.budget_feasible) {
    j["budget"] = {{"rho_delta_u", vector_json(rep.budget.rho_delta_u)},
                   {"rho_u_bar", vector_json(rep.budget.rho_u_bar)},
                   {"rho_u", vector_json(rep.budget.rho_u)},
                   {"rho_u_bar_total", rep.budget.rho_u_bar_total},
                   {"varrho_u", rep.budget.varrho_u}};
  }
  if (rep.has_small_gain) {
    j["sigma_NL"] = rep.sigma_NL;
    j["rho_x"] = rep.rho_x;
    j["small_gain"] = {{"kappa_u", rep.small_gain.kappa_u},
                       {"kappa_bar", rep.small_gain.kappa_bar},
                       {"kappa_x", rep.small_gain.kappa_x},
                       {"norm_BC", rep.small_gain.norm_BC},
                       {"norm_mix", rep.small_gain.norm_mix},
                       {"series_sum", rep.small_gain.series_sum}};
  }
  j["items"] = {{"norm_condition", rep.item1_norm_pass},
                {"reach_rank", rep.item2_rank_pass},
                {"budget_strict", rep.item3_budget_pass},
                {"chi_bound", rep.item4_chi_pass},
                {"input_inclusion", rep.item5_inclusion_pass}};
  j["overall_pass"] = rep.overall_pass;
  j["notes"] = rep.notes;
  return j.dump(2);
}

void emit(const closed_loop::RunArtifacts& art,
          const closed_loop::Verdict& verdict, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  // trace.csv: k, h, x..., u..., du..., du_hat..., w_norm, hl_ok, ll_ok.
  {
    std::FILE* f = std::fopen((fs::path(dir) / "trace.csv").c_str(), "w");
    if (!f) throw std::runtime_error("emit: cannot write trace.csv");
    const int n = art.sys.n();
    const int m = art.sys.m();
    std::fprintf(f, "k,h");
    for (int i = 0; i < n; ++i) std::fprintf(f, ",x%d", i);
    for (int i = 0; i < m; ++i) std::fprintf(f, ",u%d", i);
    for (int i = 0; i < m; ++i) std::fprintf(f, ",du%d", i);
    for (int i = 0; i < m; ++i) std::fprintf(f, ",duhat%d", i);
    std::fprintf(f, ",w_norm,hl_ok,ll_ok\n");
    for (const auto& r : art.trace.fast) {
      const auto& s = art.trace.slow[static_cast<size_t>(r.k)];
      std::fprintf(f, "%d,%d", r.k, r.h);
      for (int i = 0; i < n; ++i) write_csv_value(f, r.x(i), false);
      for (int i = 0; i < m; ++i) write_csv_value(f, r.u(i), false);
      for (int i = 0; i < m; ++i) write_csv_value(f, r.du(i), false);
      for (int i = 0; i < m; ++i) write_csv_value(f, r.du_hat(i), false);
      std::fprintf(f, ",%.17g,%d,%d\n", s.w_norm, s.hl_feasible ? 1 : 0,
                   s.ll_feasible ? 1 : 0);
    }
    std::fclose(f);
  }

  // slow.csv: per slow step.
  {
    std::FILE* f = std::fopen((fs::path(dir) / "slow.csv").c_str(), "w");
    if (!f) throw std::runtime_error("emit: cannot write slow.csv");
    const int m = art.sys.m();
    const int nb = art.rm.n_bar();
    std::fprintf(f, "k");
    for (int i = 0; i < m; ++i) std::fprintf(f, ",ubar%d", i);
    std::fprintf(f, ",w_norm,hl_ok,ll_ok,input_margin,x_err_norm");
    for (int i = 0; i < nb; ++i) std::fprintf(f, ",ebar%d", i);
    std::fprintf(f, ",rhs_identity_err,rho_w,reference_switch\n");
    for (const auto& s : art.trace.slow) {
      std::fprintf(f, "%d", s.k);
      for (int i = 0; i < m; ++i) {
        write_csv_value(f, s.u_bar.size() ? s.u_bar(i) : 0.0, false);
      }
      std::fprintf(f, ",%.17g,%d,%d,%.17g,%.17g", s.w_norm,
                   s.hl_feasible ? 1 : 0, s.ll_feasible ? 1 : 0,
                   s.input_margin, s.x_err_norm);
      for (int i = 0; i < nb; ++i) {
        write_csv_value(f, s.e_bar.size() ? s.e_bar(i) : 0.0, false);
      }
      std::fprintf(f, ",%.17g,%.17g,%d\n", s.rhs_identity_err,
                   s.rho_w_in_force, s.reference_switch ? 1 : 0);
    }
    std::fclose(f);
  }

  // report.json: tuning report + the verification summary + verdict table.
  {
    json j = json::parse(tuning_report_json(art.report));
    closed_loop::VerifySummary s = closed_loop::make_summary(art);
    json jv;
    jv["w_norm"] = s.w_norm;
    jv["rho_w"] = s.rho_w;
    jv["input_margin"] = s.input_margin;
    jv["worst_margin_h"] = s.worst_margin_h;
    jv["rhs_identity_err"] = s.rhs_identity_err;
    jv["hl_ok"] = s.hl_ok;
    jv["ll_ok"] = s.ll_ok;
    jv["reference_switch"] = s.reference_switch;
    jv["x_slow"] = json::array();
    for (const Vec& x : s.x_slow) jv["x_slow"].push_back(vector_json(x));
    jv["beta_x_slow"] = json::array();
    for (const Vec& x : s.beta_x_slow) jv["beta_x_slow"].push_back(vector_json(x));
    jv["x_S"] = vector_json(s.x_S);
    jv["x_bar_S"] = vector_json(s.x_bar_S);
    jv["Z_lower"] = vector_json(s.Z.lower);
    jv["Z_upper"] = vector_json(s.Z.upper);
    jv["claim_iv_radius"] = vector_json(s.claim_iv_radius);
    jv["sigma"] = std::isfinite(s.sigma) ? json(s.sigma) : json(nullptr);
    jv["completed"] = s.completed;
    j["verify"] = jv;

    json jt = json::array();
    for (const auto& c : verdict.claims) {
      jt.push_back({{"claim", c.claim},
                    {"applicable", c.applicable},
                    {"pass", c.pass},
                    {"detail", c.detail}});
    }
    j["verdicts"] = jt;
    if (!art.trace.failure.empty()) j["failure"] = art.trace.failure;

    std::ofstream out(fs::path(dir) / "report.json");
    if (!out) throw std::runtime_error("emit: cannot write report.json");
    out << j.dump(2) << "\n";
  }
}

closed_loop::VerifySummary load_summary(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "report.json");
  if (!in) throw std::runtime_error("load_summary: cannot open report.json");
  json j;
  in >> j;
  if (!j.contains("verify")) {
    throw std::runtime_error("load_summary: report.json has no verify section");
  }
  const auto& jv = j["verify"];
  closed_loop::VerifySummary s;
  s.w_norm = jv["w_norm"].get<std::vector<double>>();
  s.rho_w = jv["rho_w"].get<std::vector<double>>();
  s.input_margin = jv["input_margin"].get<std::vector<double>>();
  s.worst_margin_h = jv["worst_margin_h"].get<std::vector<int>>();
  s.rhs_identity_err = jv["rhs_identity_err"].get<std::vector<double>>();
  s.hl_ok = jv["hl_ok"].get<std::vector<bool>>();
  s.ll_ok = jv["ll_ok"].get<std::vector<bool>>();
  s.reference_switch = jv["reference_switch"].get<std::vector<bool>>();
  for (const auto& jx : jv["x_slow"]) s.x_slow.push_back(parse_vector(jx, "x_slow"));
  for (const auto& jx : jv["beta_x_slow"]) {
    s.beta_x_slow.push_back(parse_vector(jx, "beta_x_slow"));
  }
  s.x_S = parse_vector(jv["x_S"], "x_S");
  s.x_bar_S = parse_vector(jv["x_bar_S"], "x_bar_S");
  s.Z = sets::Box{parse_vector(jv["Z_lower"], "Z_lower"),
                  parse_vector(jv["Z_upper"], "Z_upper")};
  s.claim_iv_radius = parse_vector(jv["claim_iv_radius"], "claim_iv_radius");
  s.sigma = jv["sigma"].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                  : jv["sigma"].get<double>();
  s.completed = jv["completed"].get<bool>();
  return s;
}

}  // namespace config_io
}  // namespace htmpc
