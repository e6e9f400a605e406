#include "sfd/loop.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

#include "json_util.hpp"
#include "sfd/error.hpp"

namespace sfd {

namespace {

constexpr double kReplayTolerance = 1e-9;

// Latency draws use their own stream so self-sampling and planner timing
// never perturb each other.
constexpr std::uint64_t kLatencyStream = 0x9E3779B97F4A7C15ull;

double state_error(const VehicleState& a, const VehicleState& b) {
  double e = std::abs(a.pose.x - b.pose.x);
  e = std::max(e, std::abs(a.pose.y - b.pose.y));
  e = std::max(e, std::abs(normalize_angle(a.pose.heading - b.pose.heading)));
  e = std::max(e, std::abs(a.speed - b.speed));
  return e;
}

// Result slot for an in-flight wall-clock request. The worker fills it once;
// the controller takes it whole.
struct Slot {
  std::mutex m;
  bool done = false;
  PlanAnswer answer;
  std::string error;
};

class EpisodeRunner {
 public:
  EpisodeRunner(const Scenario& scenario, const PolicyNet& net, const LoopConfig& cfg)
      : scenario_(scenario),
        net_(net),
        cfg_(cfg),
        policy_rng_(cfg.seed),
        latency_rng_(cfg.seed ^ kLatencyStream) {}

  EpisodeResult run() {
    const bool wall = cfg_.mode == LoopMode::wall_clock;
    const int max_ticks = cfg_.max_ticks > 0 ? cfg_.max_ticks : scenario_.max_ticks;
    VehicleState state = scenario_.start;
    const auto t0 = std::chrono::steady_clock::now();

    EpisodeResult result;
    result.trace.reserve(static_cast<std::size_t>(max_ticks));
    for (std::int64_t tick = 0; tick < max_ticks; ++tick) {
      const double t = static_cast<double>(tick) * cfg_.d;
      TickLog log;
      log.tick = tick;
      log.state = state;
      Observation obs = render(state, scenario_, t, cfg_.camera);
      obs.tick = tick;
      log.obs_digest = observation_digest(obs);

      if (cfg_.source.kind == InstructionSource::Kind::planner) {
        if (wall) {
          wall_clock_planner(state, t, obs, tick, log, result);
        } else {
          virtual_planner(state, t, obs, tick, log, result);
        }
      }

      const PolicyOutput out = forward(net_, obs);
      Instruction instr = cache_;
      if (cfg_.source.kind == InstructionSource::Kind::self_sampled) {
        instr = self_instruct(out, policy_rng_);
      } else if (cfg_.source.kind == InstructionSource::Kind::fixed) {
        instr = cfg_.source.fixed_value;
      }
      log.instruction_used = instr;
      log.instruction_age_ticks = age_;
      log.action = act(out, instr);

      state = step_dynamics(state, log.action, cfg_.d, cfg_.vehicle);
      result.trace.push_back(std::move(log));
      result.ticks_run = tick + 1;
      ++age_;

      const CollisionReport hit = check_collision(state, scenario_, t + cfg_.d, cfg_.vehicle);
      if (hit.wall) {
        result.termination = Termination::collision_wall;
        break;
      }
      if (hit.obstacle) {
        result.termination = Termination::collision_obstacle;
        break;
      }
      if (state.pose.x >= scenario_.goal_x) {
        result.termination = Termination::goal;
        break;
      }
      if (wall) std::this_thread::sleep_until(t0 + std::chrono::duration<double>((tick + 1) * cfg_.d));
    }
    result.final_state = state;
    result.success = result.termination == Termination::goal;
    return result;
  }

 private:
  void apply(PlannerDecision decision, const std::optional<Instruction>& instruction,
             TickLog& log, EpisodeResult& result) {
    if (instruction) {
      cache_ = *instruction;
      age_ = 0;
      decision.instruction = *instruction;
      log.planner_events.push_back({PlannerEvent::Kind::arrived, *instruction, decision.raw_response});
      result.decisions.push_back(std::move(decision));
    } else {
      log.planner_events.push_back({PlannerEvent::Kind::failed, Instruction::middle, decision.raw_response});
    }
  }

  void virtual_planner(const VehicleState& state, double t, const Observation& obs,
                       std::int64_t tick, TickLog& log, EpisodeResult& result) {
    if (pending_ && pending_->decision.available_at_tick <= tick) {
      auto p = std::move(*pending_);
      pending_.reset();
      apply(std::move(p.decision), p.answer.instruction, log, result);
    }
    if (pending_) return;

    Pending p;
    try {
      p.answer = cfg_.planner->plan({state, scenario_, t, obs, tick});
    } catch (const Error& e) {
      p.answer = {std::nullopt, std::string("planner error: ") + e.what()};
    }
    const double latency = cfg_.planner->latency().sample(latency_rng_);
    p.decision.raw_response = p.answer.raw;
    p.decision.issued_at_tick = tick;
    p.decision.available_at_tick = tick + latency_ticks(latency, cfg_.d);
    log.planner_events.push_back({PlannerEvent::Kind::issued, Instruction::middle, {}});
    if (p.decision.available_at_tick == tick) {
      apply(std::move(p.decision), p.answer.instruction, log, result);
    } else {
      pending_ = std::move(p);
    }
  }

  void wall_clock_planner(const VehicleState& state, double t, const Observation& obs,
                          std::int64_t tick, TickLog& log, EpisodeResult& result) {
    if (slot_) {
      std::unique_lock lock(slot_->m);
      if (slot_->done) {
        PlannerDecision decision;
        decision.issued_at_tick = issued_tick_;
        decision.available_at_tick = tick;
        if (!slot_->error.empty()) {
          std::cerr << "planner request failed at tick " << tick << ": " << slot_->error << "\n";
          decision.raw_response = slot_->error;
          lock.unlock();
          apply(std::move(decision), std::nullopt, log, result);
        } else {
          decision.raw_response = slot_->answer.raw;
          const auto instruction = slot_->answer.instruction;
          lock.unlock();
          apply(std::move(decision), instruction, log, result);
        }
        slot_.reset();
      }
    }
    if (slot_) return;

    auto slot = std::make_shared<Slot>();
    const bool simulate_latency = cfg_.planner->kind() != PlannerKind::vlm;
    const double latency = simulate_latency ? cfg_.planner->latency().sample(latency_rng_) : 0.0;
    std::thread([slot, planner = cfg_.planner, scenario = scenario_, state, t, obs, tick, latency] {
      const auto begin = std::chrono::steady_clock::now();
      PlanAnswer answer;
      std::string error;
      try {
        answer = planner->plan({state, scenario, t, obs, tick});
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::this_thread::sleep_until(begin + std::chrono::duration<double>(latency));
      std::lock_guard lock(slot->m);
      slot->answer = std::move(answer);
      slot->error = std::move(error);
      slot->done = true;
    }).detach();
    slot_ = std::move(slot);
    issued_tick_ = tick;
    log.planner_events.push_back({PlannerEvent::Kind::issued, Instruction::middle, {}});
  }

  struct Pending {
    PlannerDecision decision;
    PlanAnswer answer;
  };

  const Scenario& scenario_;
  const PolicyNet& net_;
  const LoopConfig& cfg_;
  Rng policy_rng_;
  Rng latency_rng_;
  Instruction cache_ = Instruction::middle;
  std::int64_t age_ = 0;
  std::optional<Pending> pending_;
  std::shared_ptr<Slot> slot_;
  std::int64_t issued_tick_ = 0;
};

}  // namespace

std::string to_string(const InstructionSource& source) {
  switch (source.kind) {
    case InstructionSource::Kind::planner: return "planner";
    case InstructionSource::Kind::self_sampled: return "self_sampled";
    case InstructionSource::Kind::fixed: return "fixed:" + std::string(to_string(source.fixed_value));
  }
  return "?";
}

InstructionSource instruction_source_from_string(const std::string& text) {
  if (text == "planner") return InstructionSource::planner();
  if (text == "self_sampled") return InstructionSource::self_sampled();
  if (text.rfind("fixed:", 0) == 0) {
    if (auto i = instruction_from_string(text.substr(6))) return InstructionSource::fixed(*i);
  }
  throw InvalidInput("unknown instruction source '" + text + "'");
}

void LoopConfig::validate() const {
  if (!(d > 0.0) || !std::isfinite(d)) throw InvalidInput("controller period d must be positive");
  if (max_ticks < 0) throw InvalidInput("max_ticks must be >= 0");
  if (source.kind == InstructionSource::Kind::planner && !planner) {
    throw InvalidInput("the planner instruction source needs a planner backend");
  }
  camera.validate();
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::goal: return "goal";
    case Termination::collision_wall: return "collision_wall";
    case Termination::collision_obstacle: return "collision_obstacle";
    case Termination::timeout: return "timeout";
  }
  return "?";
}

Termination termination_from_string(std::string_view text) {
  if (text == "goal") return Termination::goal;
  if (text == "collision_wall") return Termination::collision_wall;
  if (text == "collision_obstacle") return Termination::collision_obstacle;
  if (text == "timeout") return Termination::timeout;
  throw InvalidInput("unknown termination '" + std::string(text) + "'");
}

EpisodeResult run_episode(const Scenario& scenario, const PolicyNet& net, const LoopConfig& cfg) {
  cfg.validate();
  scenario.validate(cfg.vehicle);
  if (net.config().input_width != cfg.camera.width || net.config().input_height != cfg.camera.height) {
    throw ShapeError("network input does not match the camera resolution");
  }
  return EpisodeRunner(scenario, net, cfg).run();
}

ReplayVerdict replay(const std::vector<TickLog>& trace, const Scenario& scenario,
                     const std::optional<VehicleState>& final_state, double d,
                     const VehicleParams& vehicle) {
  ReplayVerdict v;
  auto fail = [&](std::int64_t tick, double err, std::string msg) {
    v.ok = false;
    v.divergent_tick = tick;
    v.max_error = std::max(v.max_error, err);
    v.message = std::move(msg);
    return v;
  };
  if (trace.empty()) return v;
  const double e0 = state_error(trace.front().state, scenario.start);
  if (e0 > kReplayTolerance) return fail(trace.front().tick, e0, "first state is not the scenario start");
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& log = trace[k];
    if (k > 0 && log.tick != trace[k - 1].tick + 1) return fail(log.tick, 0.0, "ticks are not consecutive");
    VehicleState next;
    try {
      next = step_dynamics(log.state, log.action, d, vehicle);
    } catch (const InvalidInput& e) {
      return fail(log.tick, 0.0, std::string("logged action is invalid: ") + e.what());
    }
    const VehicleState* logged = nullptr;
    if (k + 1 < trace.size()) {
      logged = &trace[k + 1].state;
    } else if (final_state) {
      logged = &*final_state;
    }
    if (!logged) break;
    const double err = state_error(next, *logged);
    v.max_error = std::max(v.max_error, err);
    if (err > kReplayTolerance) {
      return fail(log.tick, err, "state after tick " + std::to_string(log.tick) + " diverges");
    }
  }
  return v;
}

namespace {

std::string_view event_name(PlannerEvent::Kind k) {
  switch (k) {
    case PlannerEvent::Kind::issued: return "issued";
    case PlannerEvent::Kind::arrived: return "arrived";
    case PlannerEvent::Kind::failed: return "failed";
  }
  return "?";
}

}  // namespace

std::string tick_log_to_json(const TickLog& log) {
  using json_util::json;
  json events = json::array();
  for (const auto& e : log.planner_events) {
    json ej = {{"kind", event_name(e.kind)}};
    if (e.kind == PlannerEvent::Kind::arrived) ej["instruction"] = to_string(e.instruction);
    if (!e.detail.empty()) ej["detail"] = e.detail;
    events.push_back(std::move(ej));
  }
  json j = {{"tick", log.tick},
            {"state", json_util::to_json(log.state)},
            {"obs_digest", digest_hex(log.obs_digest)},
            {"instruction_used", to_string(log.instruction_used)},
            {"instruction_age_ticks", log.instruction_age_ticks},
            {"action", json_util::to_json(log.action)},
            {"planner_events", events}};
  return j.dump();
}

TickLog tick_log_from_json(const std::string& line) {
  using json_util::json;
  TickLog log;
  try {
    const json j = json::parse(line);
    log.tick = j.at("tick").get<std::int64_t>();
    log.state = json_util::state_from_json(j.at("state"));
    log.obs_digest = std::stoull(j.at("obs_digest").get<std::string>(), nullptr, 16);
    log.instruction_used = *instruction_from_string(j.at("instruction_used").get<std::string>());
    log.instruction_age_ticks = j.at("instruction_age_ticks").get<std::int64_t>();
    log.action = json_util::action_from_json(j.at("action"));
    for (const auto& ej : j.at("planner_events")) {
      PlannerEvent e;
      const auto kind = ej.at("kind").get<std::string>();
      if (kind == "issued") {
        e.kind = PlannerEvent::Kind::issued;
      } else if (kind == "arrived") {
        e.kind = PlannerEvent::Kind::arrived;
        e.instruction = *instruction_from_string(ej.at("instruction").get<std::string>());
      } else if (kind == "failed") {
        e.kind = PlannerEvent::Kind::failed;
      } else {
        throw IoError("unknown planner event '" + kind + "'");
      }
      e.detail = ej.value("detail", "");
      log.planner_events.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("bad trace line: ") + e.what());
  }
  return log;
}

void write_trace(const std::vector<TickLog>& trace, std::ostream& os) {
  for (const auto& log : trace) os << tick_log_to_json(log) << '\n';
}

std::vector<TickLog> read_trace(std::istream& is) {
  std::vector<TickLog> trace;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) trace.push_back(tick_log_from_json(line));
  }
  return trace;
}

std::string episode_summary_json(const EpisodeResult& result, const std::string& scenario) {
  using json_util::json;
  std::int64_t arrivals = 0;
  for (const auto& log : result.trace) {
    for (const auto& e : log.planner_events) arrivals += e.kind == PlannerEvent::Kind::arrived;
  }
  json j = {{"scenario", scenario},
            {"success", result.success},
            {"termination", to_string(result.termination)},
            {"ticks_run", result.ticks_run},
            {"planner_arrivals", arrivals},
            {"final_state", json_util::to_json(result.final_state)}};
  return j.dump();
}

}  // namespace sfd
