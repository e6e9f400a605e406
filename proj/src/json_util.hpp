#pragma once

// JSON conversions shared by the trace, report, config and serve code.

#include <json.hpp>

#include "sfd/world.hpp"

namespace sfd::json_util {

using nlohmann::json;

inline json to_json(const VehicleState& s) {
  return {{"x", s.pose.x}, {"y", s.pose.y}, {"heading", s.pose.heading}, {"speed", s.speed}};
}

inline VehicleState state_from_json(const json& j) {
  VehicleState s;
  s.pose.x = j.at("x").get<double>();
  s.pose.y = j.at("y").get<double>();
  s.pose.heading = j.at("heading").get<double>();
  s.speed = j.at("speed").get<double>();
  return s;
}

inline json to_json(const Action& a) { return {{"steering", a.steering}, {"throttle", a.throttle}}; }

inline Action action_from_json(const json& j) {
  return {j.at("steering").get<double>(), j.at("throttle").get<double>()};
}

}  // namespace sfd::json_util
