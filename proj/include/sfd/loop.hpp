#pragma once

// Closed loop: the controller ticks every d seconds on whatever instruction
// is cached while the planner refreshes the cache in the background.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfd/planner.hpp"
#include "sfd/policy.hpp"
#include "sfd/sensor.hpp"
#include "sfd/world.hpp"

namespace sfd {

struct InstructionSource {
  enum class Kind { planner, self_sampled, fixed };
  Kind kind = Kind::planner;
  Instruction fixed_value = Instruction::middle;

  static InstructionSource planner() { return {Kind::planner, Instruction::middle}; }
  static InstructionSource self_sampled() { return {Kind::self_sampled, Instruction::middle}; }
  static InstructionSource fixed(Instruction i) { return {Kind::fixed, i}; }
};

std::string to_string(const InstructionSource& source);
/// "planner", "self_sampled" or "fixed:LEFT" style.
InstructionSource instruction_source_from_string(const std::string& text);

enum class LoopMode { virtual_time, wall_clock };

struct LoopConfig {
  double d = 1.0 / 60.0;
  std::shared_ptr<PlannerBackend> planner;  // required for the planner source
  InstructionSource source;
  LoopMode mode = LoopMode::virtual_time;
  int max_ticks = 3600;
  std::uint64_t seed = 0;
  CameraSpec camera;
  VehicleParams vehicle;

  void validate() const;
};

struct PlannerEvent {
  enum class Kind { issued, arrived, failed };
  Kind kind = Kind::issued;
  Instruction instruction = Instruction::middle;  // arrived only
  std::string detail;                              // raw response or error

  friend bool operator==(const PlannerEvent&, const PlannerEvent&) = default;
};

struct TickLog {
  std::int64_t tick = 0;
  VehicleState state;  // at the start of the tick
  std::uint64_t obs_digest = 0;
  Instruction instruction_used = Instruction::middle;
  std::int64_t instruction_age_ticks = 0;
  Action action;
  std::vector<PlannerEvent> planner_events;  // in the order they happened

  friend bool operator==(const TickLog&, const TickLog&) = default;
};

enum class Termination { goal, collision_wall, collision_obstacle, timeout };
std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view text);

struct EpisodeResult {
  bool success = false;
  Termination termination = Termination::timeout;
  std::int64_t ticks_run = 0;
  VehicleState final_state;
  std::vector<TickLog> trace;
  std::vector<PlannerDecision> decisions;  // every applied planner reply
};

EpisodeResult run_episode(const Scenario& scenario, const PolicyNet& net, const LoopConfig& cfg);

struct ReplayVerdict {
  bool ok = true;
  std::optional<std::int64_t> divergent_tick;  // tick whose action led to the mismatch
  double max_error = 0.0;
  std::string message;
};

/// Re-run the dynamics from the logged actions and compare every logged
/// state within 1e-9. `final_state` (if given) is checked after the last tick.
ReplayVerdict replay(const std::vector<TickLog>& trace, const Scenario& scenario,
                     const std::optional<VehicleState>& final_state = std::nullopt,
                     double d = 1.0 / 60.0, const VehicleParams& vehicle = {});

// Trace files: JSON Lines, one TickLog per line.
std::string tick_log_to_json(const TickLog& log);
TickLog tick_log_from_json(const std::string& line);
void write_trace(const std::vector<TickLog>& trace, std::ostream& os);
std::vector<TickLog> read_trace(std::istream& is);

/// One-line JSON summary of an episode (no trace).
std::string episode_summary_json(const EpisodeResult& result, const std::string& scenario);

}  // namespace sfd
