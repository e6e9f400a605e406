#pragma once

// Repeated-trial success rates over a grid of scenarios and planner setups.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sfd/loop.hpp"
#include "sfd/planner.hpp"

namespace sfd {

/// One "model" column of the grid: where instructions come from and, for
/// the planner source, which backend and latency.
struct ModelSetup {
  InstructionSource source = InstructionSource::planner();
  PlannerKind backend = PlannerKind::oracle;
  LatencyModel latency;
  double lookahead = kDefaultLookahead;
  std::vector<Instruction> script;  // scripted backend only

  /// Short label used in reports, e.g. "oracle" or "self_sampled".
  std::string backend_label() const;
};

struct EvalPlan {
  std::vector<std::string> scenarios;
  std::vector<ModelSetup> models;
  int trials = 30;
  std::uint64_t seed_base = 0;
  double lateral_jitter = 0.05;    // metres, uniform +-
  double heading_jitter_deg = 1.0; // degrees, uniform +-
  double d = 1.0 / 60.0;
  int max_ticks = 0;               // 0: the scenario's own limit
  CameraSpec camera;

  void validate() const;
};

/// Parse the JSON form read by the `eval` command.
EvalPlan eval_plan_from_json(const std::string& text);

struct CellReport {
  std::string scenario;
  std::string source;
  std::string backend;
  double latency_mean_s = 0.0;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_ticks = 0.0;
  std::map<std::string, int> terminations;  // termination name -> count
};

struct SuccessReport {
  std::vector<CellReport> cells;
};

/// Seed of one trial; depends only on the base, the cell index and the
/// trial index.
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t cell, std::uint64_t trial);

/// Start pose of one trial: scenario start plus seeded jitter.
Scenario jittered(const Scenario& scenario, const EvalPlan& plan, std::uint64_t seed);

/// Builds the planner for one trial (fresh state per episode).
std::shared_ptr<PlannerBackend> make_planner(const ModelSetup& model);

using TrialCallback = std::function<void(std::size_t cell, int trial, const EpisodeResult&)>;

/// Scenario names may be built-in names or paths accepted by load_scenario.
SuccessReport run_eval(const EvalPlan& plan, const PolicyNet& net, const TrialCallback& on_trial = {});

enum class ReportFormat { csv, markdown };
std::string emit_report(const SuccessReport& report, ReportFormat format);
SuccessReport parse_report_csv(const std::string& csv);

/// Integer percentage as shown in report tables (0.8333 -> "83%").
std::string format_percent(double rate);

}  // namespace sfd
