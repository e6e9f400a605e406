#pragma once

// Deterministic 2D corridor world.
//
// Frame: x runs along the corridor, y is lateral with 0 on the centerline and
// positive y on the driver's right when facing +x. Heading 0 points along +x
// and grows clockwise seen from above, so positive steering turns right.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sfd {

inline constexpr double kPi = 3.14159265358979323846;

/// Wrap an angle into (-pi, pi].
double normalize_angle(double radians);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct VehicleState {
  Pose pose;
  double speed = 0.0;
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct Action {
  double steering = 0.0;  // -1 leftmost .. 1 rightmost
  double throttle = 0.0;  // 0 .. 1
  friend bool operator==(const Action&, const Action&) = default;
};

/// Kinematic bicycle parameters, toy-car scale.
struct VehicleParams {
  double wheelbase = 0.3;
  double max_steer = 30.0 * kPi / 180.0;
  double max_accel = 3.0;
  double drag = 0.5;
  double radius = 0.15;
  double max_speed = 4.5;

  /// Curvature at full steering lock.
  double max_curvature() const;
  /// Steady-state speed for a constant throttle.
  double cruise_speed(double throttle) const;
  /// Throttle that holds a given speed.
  double throttle_for_speed(double speed) const;
};

/// Throttle the scripted expert holds; scenarios start at the matching
/// steady-state speed.
inline constexpr double kCruiseThrottle = 0.25;

enum class ObstacleKind { cone, bin, pedestrian, car };

std::string_view to_string(ObstacleKind kind);
ObstacleKind obstacle_kind_from_string(std::string_view text);

struct Obstacle {
  Vec2 center;
  double radius = 0.15;
  Vec2 velocity;  // zero for static obstacles
  ObstacleKind kind = ObstacleKind::cone;

  /// Linear motion: center + velocity * t.
  Vec2 position_at(double t) const {
    return {center.x + velocity.x * t, center.y + velocity.y * t};
  }
  bool is_moving() const { return velocity.x != 0.0 || velocity.y != 0.0; }
};

/// Corridor half-width is piecewise constant; a segment applies from
/// `from_x` until the next segment starts.
struct CorridorSegment {
  double from_x = 0.0;
  double half_width = 1.0;
};

struct Scenario {
  std::string name;
  std::vector<CorridorSegment> corridor{{0.0, 1.0}};
  double length = 10.0;
  std::vector<Obstacle> obstacles;
  VehicleState start;
  double goal_x = 8.0;
  int max_ticks = 3600;

  double half_width_at(double x) const;
  /// Throws InvalidInput when an invariant is broken.
  void validate(const VehicleParams& vehicle = {}) const;
};

/// One Euler step of the kinematic bicycle. Throws InvalidInput on
/// non-finite or out-of-range inputs.
VehicleState step_dynamics(const VehicleState& state, const Action& action, double dt,
                           const VehicleParams& params = {});

/// Throws InvalidInput unless the action is finite and within range.
void validate_action(const Action& action);

struct CollisionReport {
  bool wall = false;
  std::optional<std::size_t> obstacle;  // index of the first obstacle hit

  bool any() const { return wall || obstacle.has_value(); }
};

CollisionReport check_collision(const VehicleState& state, const Scenario& scenario, double t,
                                const VehicleParams& params = {});

/// Names accepted by scenario_library.
const std::vector<std::string>& scenario_names();

/// Canonical layouts for training and test runs. Throws InvalidInput on an
/// unknown name.
Scenario scenario_library(std::string_view name);

/// Same scenario with every obstacle removed (used for straight routes).
Scenario without_obstacles(Scenario scenario);

}  // namespace sfd
