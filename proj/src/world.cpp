#include "sfd/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfd/error.hpp"

namespace sfd {

double normalize_angle(double radians) {
  double a = std::remainder(radians, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double VehicleParams::max_curvature() const { return std::tan(max_steer) / wheelbase; }

double VehicleParams::cruise_speed(double throttle) const {
  return std::min(max_speed, throttle * max_accel / drag);
}

double VehicleParams::throttle_for_speed(double speed) const {
  return std::clamp(speed * drag / max_accel, 0.0, 1.0);
}

std::string_view to_string(ObstacleKind kind) {
  switch (kind) {
    case ObstacleKind::cone: return "cone";
    case ObstacleKind::bin: return "bin";
    case ObstacleKind::pedestrian: return "pedestrian";
    case ObstacleKind::car: return "car";
  }
  return "cone";
}

ObstacleKind obstacle_kind_from_string(std::string_view text) {
  if (text == "cone") return ObstacleKind::cone;
  if (text == "bin") return ObstacleKind::bin;
  if (text == "pedestrian") return ObstacleKind::pedestrian;
  if (text == "car") return ObstacleKind::car;
  throw InvalidInput("unknown obstacle kind '" + std::string(text) + "'");
}

double Scenario::half_width_at(double x) const {
  double hw = corridor.front().half_width;
  for (const auto& seg : corridor) {
    if (x >= seg.from_x) hw = seg.half_width;
  }
  return hw;
}

void Scenario::validate(const VehicleParams& vehicle) const {
  if (corridor.empty()) throw InvalidInput("scenario '" + name + "': empty corridor");
  for (std::size_t i = 0; i < corridor.size(); ++i) {
    if (!(corridor[i].half_width > vehicle.radius)) {
      throw InvalidInput("scenario '" + name + "': corridor narrower than the vehicle");
    }
    if (i > 0 && !(corridor[i].from_x > corridor[i - 1].from_x)) {
      throw InvalidInput("scenario '" + name + "': corridor segments must be increasing in x");
    }
  }
  if (!(goal_x > start.pose.x)) throw InvalidInput("scenario '" + name + "': goal behind start");
  if (!(length > 0.0)) throw InvalidInput("scenario '" + name + "': non-positive length");
  if (max_ticks <= 0) throw InvalidInput("scenario '" + name + "': max_ticks must be positive");
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0)) throw InvalidInput("scenario '" + name + "': obstacle radius <= 0");
    if (std::abs(o.center.y) + o.radius > half_width_at(o.center.x)) {
      throw InvalidInput("scenario '" + name + "': obstacle outside the corridor");
    }
  }
  if (!std::isfinite(start.pose.x) || !std::isfinite(start.pose.y) ||
      !std::isfinite(start.pose.heading) || !(start.speed >= 0.0)) {
    throw InvalidInput("scenario '" + name + "': invalid start state");
  }
}

void validate_action(const Action& action) {
  if (!std::isfinite(action.steering) || !std::isfinite(action.throttle)) {
    throw InvalidInput("action has non-finite component");
  }
  if (action.steering < -1.0 || action.steering > 1.0) {
    throw InvalidInput("steering outside [-1, 1]");
  }
  if (action.throttle < 0.0 || action.throttle > 1.0) {
    throw InvalidInput("throttle outside [0, 1]");
  }
}

VehicleState step_dynamics(const VehicleState& state, const Action& action, double dt,
                           const VehicleParams& params) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("dt must be positive and finite");
  if (!std::isfinite(state.pose.x) || !std::isfinite(state.pose.y) ||
      !std::isfinite(state.pose.heading) || !std::isfinite(state.speed)) {
    throw InvalidInput("vehicle state has non-finite component");
  }
  validate_action(action);

  VehicleState next;
  const double accel = action.throttle * params.max_accel - params.drag * state.speed;
  next.speed = std::clamp(state.speed + accel * dt, 0.0, params.max_speed);
  const double yaw_rate =
      state.speed / params.wheelbase * std::tan(action.steering * params.max_steer);
  next.pose.heading = normalize_angle(state.pose.heading + yaw_rate * dt);
  next.pose.x = state.pose.x + next.speed * std::cos(next.pose.heading) * dt;
  next.pose.y = state.pose.y + next.speed * std::sin(next.pose.heading) * dt;
  return next;
}

CollisionReport check_collision(const VehicleState& state, const Scenario& scenario, double t,
                                const VehicleParams& params) {
  CollisionReport report;
  const double r = params.radius;
  report.wall = std::abs(state.pose.y) + r > scenario.half_width_at(state.pose.x);
  for (std::size_t i = 0; i < scenario.obstacles.size(); ++i) {
    const auto& o = scenario.obstacles[i];
    const Vec2 c = o.position_at(t);
    const double dx = state.pose.x - c.x;
    const double dy = state.pose.y - c.y;
    const double reach = r + o.radius;
    if (dx * dx + dy * dy < reach * reach) {
      report.obstacle = i;
      break;
    }
  }
  return report;
}

Scenario without_obstacles(Scenario scenario) {
  scenario.obstacles.clear();
  scenario.name += "_EMPTY";
  return scenario;
}

}  // namespace sfd
