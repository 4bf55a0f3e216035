#pragma once

#include <string>

#include "htmpc/closed_loop.hpp"

namespace htmpc {
namespace config_io {

/// Parses the JSON scenario document (matrices as nested row-major arrays).
/// Throws std::runtime_error naming the offending field path.
closed_loop::ScenarioConfig load_config(const std::string& path);

/// Writes trace.csv (one row per fast step), slow.csv (one row per slow
/// step), and report.json (tuning report, design summary, verification data
/// and verdicts) into dir.
void emit(const closed_loop::RunArtifacts& artifacts,
          const closed_loop::Verdict& verdict, const std::string& dir);

/// Rebuilds the verification inputs persisted by emit.
closed_loop::VerifySummary load_summary(const std::string& dir);

/// Serializes the tuning report (stand-alone JSON document).
std::string tuning_report_json(const tuning::TuningReport& report);

}  // namespace config_io
}  // namespace htmpc
