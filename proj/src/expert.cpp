#include <algorithm>
#include <cmath>

#include "sfd/error.hpp"
#include "sfd/learn.hpp"

namespace sfd {

namespace {

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

double ScriptedExpert::reference_y(const Scenario& scenario, double x, Instruction route) const {
  if (route == Instruction::middle) return 0.0;
  const double side = route == Instruction::left ? -1.0 : 1.0;
  double bump = 0.0;
  for (const auto& o : scenario.obstacles) {
    const double ox = o.center.x;
    const double up = smoothstep(ox - params_.ramp_start, ox - params_.ramp_end, x);
    const double down =
        1.0 - smoothstep(ox + params_.hold_after, ox + params_.hold_after + params_.return_length, x);
    bump = std::max(bump, std::min(up, down));
  }
  return side * params_.offset * bump;
}

Action ScriptedExpert::drive(const VehicleState& state, const Scenario& scenario, double /*t*/,
                             Instruction route) {
  const VehicleParams vehicle;
  const double tx = state.pose.x + params_.lookahead;
  const double ty = reference_y(scenario, tx, route);
  const double dx = tx - state.pose.x;
  const double dy = ty - state.pose.y;
  const double dist = std::hypot(dx, dy);
  const double alpha = normalize_angle(std::atan2(dy, dx) - state.pose.heading);
  const double curvature = 2.0 * std::sin(alpha) / dist;
  const double delta = std::atan(curvature * vehicle.wheelbase);
  return {std::clamp(delta / vehicle.max_steer, -1.0, 1.0), params_.throttle};
}

DemoDataset collect_demos(const Scenario& scenario, ExpertDriver& driver, const CollectConfig& cfg) {
  if (cfg.routes <= 0) throw InvalidInput("routes must be positive");
  if (!(cfg.fps > 0.0) || !(cfg.dt > 0.0)) throw InvalidInput("fps and dt must be positive");
  const double ticks_per_frame = 1.0 / (cfg.fps * cfg.dt);
  const auto stride = static_cast<int>(std::lround(ticks_per_frame));
  if (stride < 1 || std::abs(ticks_per_frame - stride) > 1e-9) {
    throw InvalidInput("fps must divide the simulation rate");
  }
  scenario.validate(cfg.vehicle);
  const Scenario empty = without_obstacles(scenario);

  std::vector<Instruction> labels;
  const int third = cfg.routes / 3;
  const int rest = cfg.routes - 3 * third;
  for (int i = 0; i < third + (rest > 0 ? 1 : 0); ++i) labels.push_back(Instruction::left);
  for (int i = 0; i < third; ++i) labels.push_back(Instruction::middle);
  for (int i = 0; i < third + (rest > 1 ? 1 : 0); ++i) labels.push_back(Instruction::right);

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto* scripted = dynamic_cast<ScriptedExpert*>(&driver);
  const double base_offset = scripted ? scripted->params().offset : 0.0;

  DemoDataset data;
  for (const Instruction label : labels) {
    const Scenario& world = label == Instruction::middle ? empty : scenario;
    bool recorded = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !recorded; ++attempt) {
      VehicleState state = world.start;
      const bool middle = label == Instruction::middle;
      state.pose.y += (middle ? cfg.middle_lateral_jitter : cfg.lateral_jitter) * unit(rng);
      state.pose.heading +=
          (middle ? cfg.middle_heading_jitter_deg : cfg.heading_jitter_deg) * kPi / 180.0 * unit(rng);
      if (scripted) scripted->params().offset = base_offset + cfg.offset_jitter * unit(rng);

      std::vector<Sample> route;
      bool crashed = false;
      double noise = 0.0;
      const double rho = cfg.noise_correlation;
      const double innovation = cfg.steering_noise * std::sqrt(1.0 - rho * rho);
      const double stop_x = world.goal_x + cfg.tail;
      for (int tick = 0; tick < world.max_ticks; ++tick) {
        const double t = tick * cfg.dt;
        const Action a = driver.drive(state, world, t, label);
        validate_action(a);
        if (tick % stride == 0) {
          Sample s;
          s.obs = render(state, world, t, cfg.camera);
          s.obs.tick = tick;
          s.y_s = a.steering;
          s.y_t = a.throttle;
          s.y_c = index_of(label);
          route.push_back(std::move(s));
        }
        noise = rho * noise + innovation * gauss(rng);
        const Action executed{std::clamp(a.steering + noise, -1.0, 1.0), a.throttle};
        state = step_dynamics(state, executed, cfg.dt, cfg.vehicle);
        if (check_collision(state, world, t + cfg.dt, cfg.vehicle).any()) {
          crashed = true;
          break;
        }
        if (state.pose.x >= stop_x) break;
      }
      if (!crashed && state.pose.x >= stop_x) {
        data.append_route(std::move(route), label);
        recorded = true;
      }
    }
    if (!recorded) throw InvalidInput("expert could not complete a route without colliding");
  }
  if (scripted) scripted->params().offset = base_offset;
  return data;
}

}  // namespace sfd
