#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "sfd/learn.hpp"
#include "sfd/world.hpp"

namespace sfd::testing {

/// Exhaustive reference for check_collision: walk the corridor segments by
/// hand and compare plain Euclidean distances.
inline CollisionReport brute_collision(const VehicleState& s, const Scenario& sc, double t, const VehicleParams& vp) {
  CollisionReport r;
  double hw = sc.corridor.front().half_width;
  for (const auto& seg : sc.corridor) {
    if (s.pose.x >= seg.from_x) hw = seg.half_width;
  }
  r.wall = std::abs(s.pose.y) + vp.radius > hw;
  for (std::size_t i = 0; i < sc.obstacles.size(); ++i) {
    const auto& o = sc.obstacles[i];
    const double ox = o.center.x + o.velocity.x * t;
    const double oy = o.center.y + o.velocity.y * t;
    if (std::hypot(s.pose.x - ox, s.pose.y - oy) < vp.radius + o.radius) {
      r.obstacle = i;
      break;
    }
  }
  return r;
}

/// Number of random states (with random layouts) where check_collision and
/// brute_collision disagree.
inline int collision_mismatches(int states, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const VehicleParams vp;
  int mismatches = 0;
  for (int trial = 0; trial < states; ++trial) {
    Scenario sc = empty_corridor(12.0);
    sc.corridor = {{0.0, 0.8 + 0.6 * u(rng)}, {4.0 + 4.0 * u(rng), 0.8 + 0.6 * u(rng)}};
    const int n = static_cast<int>(u(rng) * 5);
    for (int i = 0; i < n; ++i) {
      Obstacle o;
      o.center = {10.0 * u(rng), 1.4 * u(rng) - 0.7};
      o.radius = 0.05 + 0.25 * u(rng);
      if (u(rng) < 0.3) o.velocity = {2.0 * u(rng) - 1.0, 0.4 * u(rng) - 0.2};
      sc.obstacles.push_back(o);
    }
    VehicleState s;
    s.pose = {10.0 * u(rng), 2.4 * u(rng) - 1.2, 2 * kPi * u(rng) - kPi};
    const double t = 3.0 * u(rng);
    const auto got = check_collision(s, sc, t, vp);
    const auto want = brute_collision(s, sc, t, vp);
    if (got.wall != want.wall || got.obstacle != want.obstacle) ++mismatches;
  }
  return mismatches;
}

inline std::vector<Sample> random_batch(const NetConfig& cfg, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.obs = random_obs(cfg.input_width, cfg.input_height, rng);
    s.y_s = 2.0 * u(rng) - 1.0;
    s.y_t = u(rng);
    s.y_c = i % 3;
    out.push_back(s);
  }
  return out;
}

inline double batch_loss(const PolicyNet& net, const std::vector<Sample>& batch, double k) {
  double sum = 0.0;
  for (const auto& s : batch) sum += loss(forward(net, s.obs), s, k);
  return sum / static_cast<double>(batch.size());
}

/// Largest relative error between analytic and central-difference (h = 1e-4)
/// gradients over every parameter of the net.
inline double max_gradient_error(PolicyNet net, const std::vector<Sample>& batch, double k) {
  const ParamGradients g = grad(net, batch, k);
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t t = 0; t < net.params().size(); ++t) {
    auto& values = net.params()[t].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + h;
      const double up = batch_loss(net, batch, k);
      values[i] = keep - h;
      const double down = batch_loss(net, batch, k);
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g.tensors[t][i];
      const double err = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace sfd::testing
