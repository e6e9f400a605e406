// Built-in scenario layouts.
//
// Lane naming follows the three-lane occupancy code: S<left><middle><right>,
// with lanes being equal thirds of the corridor width. All geometry below is
// chosen for the simulator; nothing here is measured from a real hallway.

#include <string>

#include "sfd/error.hpp"
#include "sfd/world.hpp"

namespace sfd {

namespace {

constexpr double kHalfWidth = 1.0;
constexpr double kWideHalfWidth = 1.4;
constexpr double kConeRadius = 0.15;
constexpr double kBinRadius = 0.2;
constexpr double kPedestrianRadius = 0.2;
constexpr double kCarRadius = 0.25;
constexpr double kPedestrianSpeed = 0.5;
constexpr double kCarSpeed = 1.5;

// Single-group layouts put the obstacle row this far ahead of the start.
constexpr double kGroupDistance = 3.0;
constexpr double kGoalPastGroup = 2.0;

double lane_center(int lane, double half_width) {
  // lane: -1 left, 0 middle, +1 right
  return lane * 2.0 * half_width / 3.0;
}

Obstacle cone(double x, double y) { return {{x, y}, kConeRadius, {}, ObstacleKind::cone}; }
Obstacle bin(double x, double y) { return {{x, y}, kBinRadius, {}, ObstacleKind::bin}; }

Scenario base(std::string name, double length, double goal_x) {
  Scenario s;
  s.name = std::move(name);
  s.corridor = {{0.0, kHalfWidth}};
  s.length = length;
  s.goal_x = goal_x;
  s.start.pose = {0.0, 0.0, 0.0};
  s.start.speed = VehicleParams{}.cruise_speed(kCruiseThrottle);
  s.max_ticks = 3600;
  return s;
}

Scenario lane_layout(std::string name, bool left, bool middle, bool right) {
  const double gx = kGroupDistance;
  Scenario s = base(std::move(name), gx + kGoalPastGroup + 2.0, gx + kGoalPastGroup);
  if (left) s.obstacles.push_back(cone(gx, lane_center(-1, kHalfWidth)));
  if (middle) s.obstacles.push_back(cone(gx, lane_center(0, kHalfWidth)));
  if (right) s.obstacles.push_back(cone(gx, lane_center(+1, kHalfWidth)));
  return s;
}

// Two obstacle groups far enough apart that a planner with several seconds
// of latency can still hand over a fresh instruction between them. The
// first group closes the left and middle; past it the hallway widens and
// the second group closes the middle and right. Each group has a bin tucked
// behind it against the wall.
Scenario zigzag() {
  constexpr double first = 16.0;
  constexpr double second = 45.0;
  Scenario s = base("ZIGZAG", second + 5.0, second + 2.5);
  s.corridor = {{0.0, kHalfWidth}, {first + 1.5, kWideHalfWidth}};
  s.obstacles = {
      cone(first, lane_center(-1, kHalfWidth)),
      cone(first, 0.0),
      bin(first + 0.4, -(kHalfWidth - kBinRadius - 0.02)),
      cone(second, 0.0),
      cone(second, lane_center(+1, kHalfWidth)),
      bin(second + 0.4, kWideHalfWidth - kBinRadius - 0.02),
  };
  return s;
}

// Moving variants: the middle stays blocked by a cone and a side lane is
// taken by something walking or driving toward the vehicle, timed to be
// alongside the cone when the vehicle gets there.
Scenario moving(std::string name, bool car, bool pedestrian) {
  constexpr double cone_x = 4.0;
  Scenario s = base(std::move(name), cone_x + kGoalPastGroup + 2.0, cone_x + kGoalPastGroup);
  s.obstacles.push_back(cone(cone_x, 0.0));
  const double v = s.start.speed;
  const double meet_t = cone_x / v;
  if (car) {
    const double y = lane_center(-1, kHalfWidth);
    s.obstacles.push_back(
        {{cone_x + kCarSpeed * meet_t, y}, kCarRadius, {-kCarSpeed, 0.0}, ObstacleKind::car});
  }
  if (pedestrian) {
    // alone it takes the right lane; with a car it trails the car on the left
    const double y = car ? -(kHalfWidth - kPedestrianRadius - 0.05) : lane_center(+1, kHalfWidth);
    const double x0 = cone_x + 0.7 + kPedestrianSpeed * meet_t;
    s.obstacles.push_back(
        {{x0, y}, kPedestrianRadius, {-kPedestrianSpeed, 0.0}, ObstacleKind::pedestrian});
  }
  return s;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"S010",      "S110",       "S011",
                                                 "ZIGZAG",    "MOVING_CAR", "MOVING_PED",
                                                 "MOVING_CAR_PED"};
  return names;
}

Scenario scenario_library(std::string_view name) {
  Scenario s;
  if (name == "S010") {
    s = lane_layout("S010", false, true, false);
  } else if (name == "S110") {
    s = lane_layout("S110", true, true, false);
  } else if (name == "S011") {
    s = lane_layout("S011", false, true, true);
  } else if (name == "ZIGZAG") {
    s = zigzag();
  } else if (name == "MOVING_CAR") {
    s = moving("MOVING_CAR", true, false);
  } else if (name == "MOVING_PED") {
    s = moving("MOVING_PED", false, true);
  } else if (name == "MOVING_CAR_PED") {
    s = moving("MOVING_CAR_PED", true, true);
  } else {
    throw InvalidInput("unknown scenario '" + std::string(name) + "'");
  }
  s.validate();
  return s;
}

}  // namespace sfd
