#pragma once

// The slow layer: something that looks at the scene and answers LEFT,
// MIDDLE or RIGHT, plus a model of how long that takes.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfd/policy.hpp"
#include "sfd/sensor.hpp"
#include "sfd/world.hpp"

namespace sfd {

inline constexpr double kDefaultLookahead = 5.0;

/// Geometric stand-in for the language model: widest free lateral gap at
/// the nearest obstacle group ahead, mapped to a third of the corridor.
Instruction oracle_plan(const VehicleState& state, const Scenario& scenario, double t,
                        double lookahead = kDefaultLookahead);

/// Free lateral intervals [lo, hi] across the corridor at the nearest
/// obstacle group ahead; empty when nothing is within the lookahead.
struct LateralGap {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double center() const { return 0.5 * (lo + hi); }
};
struct GapAnalysis {
  bool obstacle_ahead = false;
  double group_x = 0.0;
  double half_width = 0.0;
  std::vector<LateralGap> gaps;  // sorted left to right
};
GapAnalysis analyze_gaps(const VehicleState& state, const Scenario& scenario, double t,
                         double lookahead = kDefaultLookahead);

/// Third of [-half_width, half_width] containing y.
Instruction lateral_third(double y, double half_width);

/// Planner response time. Gaussian samples are redrawn until non-negative.
struct LatencyModel {
  enum class Kind { fixed, gaussian };
  Kind kind = Kind::fixed;
  double mean = 0.0;
  double stddev = 0.0;

  static LatencyModel fixed(double seconds);
  static LatencyModel gaussian(double mean, double stddev);

  double sample(Rng& rng) const;
  void validate() const;
};

/// ceil(latency / d) with a small tolerance so 2.0 s at 60 Hz is 120 ticks.
std::int64_t latency_ticks(double latency, double d);

enum class PromptStyle { naive, cot };
std::string_view to_string(PromptStyle style);
PromptStyle prompt_style_from_string(std::string_view text);

struct PromptBundle {
  PromptStyle style = PromptStyle::naive;
  std::string system_text;
  std::string question_text;
  Observation image;

  /// system_text and question_text joined the way they are sent.
  std::string full_text() const;
};

PromptBundle build_prompt(PromptStyle style, const Observation& image);

/// nullopt means the response named no direction; callers keep their cache.
std::optional<Instruction> parse_instruction(std::string_view response);

struct EndpointConfig {
  std::string base_url;              // e.g. http://127.0.0.1:8000/v1
  std::string model;
  std::string api_key_env;           // name of the env var holding the key, may be empty
  double timeout_s = 30.0;

  /// Throws ConfigError on a malformed URL or non-positive timeout.
  void validate() const;
};

struct VlmReply {
  std::string raw;
  double wall_latency = 0.0;  // seconds, including a retry if one happened
};

/// Chat-completions request with the prompt text and the image as a PNG
/// data URL. Transport failures and 5xx are retried once, then raise
/// NetworkError; 4xx raises ConfigError.
VlmReply vlm_request(const PromptBundle& bundle, const EndpointConfig& endpoint);

/// JSON body sent by vlm_request (exposed for tests).
std::string vlm_request_body(const PromptBundle& bundle, const EndpointConfig& endpoint);

/// What the planner answered and when the controller may use it.
struct PlannerDecision {
  Instruction instruction = Instruction::middle;
  std::string raw_response;
  std::int64_t issued_at_tick = 0;
  std::int64_t available_at_tick = 0;
};

/// Everything a backend may look at when asked for a plan.
struct PlanRequest {
  const VehicleState& state;
  const Scenario& scenario;
  double t;
  const Observation& observation;
  std::int64_t tick;
};

struct PlanAnswer {
  std::optional<Instruction> instruction;  // nullopt: keep the cache
  std::string raw;
};

enum class PlannerKind { oracle, scripted, vlm };
std::string_view to_string(PlannerKind kind);
PlannerKind planner_kind_from_string(std::string_view text);

class PlannerBackend {
 public:
  explicit PlannerBackend(LatencyModel latency) : latency_(latency) { latency_.validate(); }
  virtual ~PlannerBackend() = default;

  virtual PlannerKind kind() const = 0;
  /// May block (vlm); may throw NetworkError or ConfigError.
  virtual PlanAnswer plan(const PlanRequest& request) = 0;

  const LatencyModel& latency() const { return latency_; }

 private:
  LatencyModel latency_;
};

class OraclePlanner final : public PlannerBackend {
 public:
  OraclePlanner(LatencyModel latency, double lookahead = kDefaultLookahead);
  PlannerKind kind() const override { return PlannerKind::oracle; }
  PlanAnswer plan(const PlanRequest& request) override;
  double lookahead() const { return lookahead_; }

 private:
  double lookahead_;
};

/// Replays a fixed list of instructions, one per request, holding the last.
class ScriptedPlanner final : public PlannerBackend {
 public:
  ScriptedPlanner(LatencyModel latency, std::vector<Instruction> sequence);
  PlannerKind kind() const override { return PlannerKind::scripted; }
  PlanAnswer plan(const PlanRequest& request) override;

 private:
  std::vector<Instruction> sequence_;
  std::size_t next_ = 0;
};

class VlmPlanner final : public PlannerBackend {
 public:
  VlmPlanner(LatencyModel latency, EndpointConfig endpoint, PromptStyle style);
  PlannerKind kind() const override { return PlannerKind::vlm; }
  PlanAnswer plan(const PlanRequest& request) override;

 private:
  EndpointConfig endpoint_;
  PromptStyle style_;
};

}  // namespace sfd
