#pragma once

#include <cmath>
#include <random>

#include "sfd/policy.hpp"
#include "sfd/world.hpp"

namespace sfd::testing {

/// Network whose heads are all zero: every V row is (0, 0.5) and p is uniform,
/// so the instruction never changes the action.
inline PolicyNet flat_net(std::uint64_t seed = 1) {
  PolicyNet net(NetConfig::standard(), seed);
  net.zero_heads();
  return net;
}

/// A few thousand parameters, for finite differences and quick training.
inline NetConfig tiny_config() {
  NetConfig c;
  c.input_width = 16;
  c.input_height = 8;
  c.trunk = {{LayerSpec::Kind::conv, 3, 3, 2, true}, {LayerSpec::Kind::dense, 12, 1, 1, true}};
  return c;
}

inline Observation random_obs(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Observation o(w, h);
  for (auto& p : o.pixels) p = static_cast<float>(u(rng));
  return o;
}

inline Scenario empty_corridor(double length = 20.0) {
  Scenario s;
  s.name = "EMPTY";
  s.length = length;
  s.goal_x = length - 2.0;
  s.start.speed = VehicleParams{}.cruise_speed(kCruiseThrottle);
  return s;
}

}  // namespace sfd::testing
