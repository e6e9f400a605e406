#pragma once

// Configuration and on-disk formats that are not owned by another module.

#include <map>
#include <string>

#include "sfd/planner.hpp"
#include "sfd/sensor.hpp"
#include "sfd/world.hpp"

namespace sfd {

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

/// "builtin:NAME" or a bare built-in name picks a library layout; anything
/// else is read as a JSON scenario file. `overrides` (by name) win over the
/// library.
Scenario load_scenario(const std::string& spec, const std::map<std::string, Scenario>& overrides = {});

struct LoopDefaults {
  double d = 1.0 / 60.0;
  int max_ticks = 0;
  double lookahead = kDefaultLookahead;
  LatencyModel latency;
};

struct ProjectConfig {
  std::string datasets_dir = ".";
  std::string checkpoints_dir = ".";
  std::string reports_dir = ".";
  CameraSpec camera;
  LoopDefaults loop;
  std::map<std::string, EndpointConfig> endpoints;
  std::map<std::string, Scenario> scenario_overrides;

  /// Defaults, then the file (if non-empty path), then SFD_* environment
  /// overrides such as SFD_CAMERA_WIDTH or SFD_LOOP_LATENCY_MEAN. Unknown
  /// keys and missing directories raise ConfigError.
  static ProjectConfig load(const std::string& path);
  static ProjectConfig from_json(const std::string& text, bool apply_env = true);
  std::string to_json() const;
};

}  // namespace sfd
