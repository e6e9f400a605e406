#include "sfd/store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "sfd/error.hpp"

namespace sfd {

using json_util::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

json scenario_json(const Scenario& s) {
  json corridor = json::array();
  for (const auto& seg : s.corridor) corridor.push_back({{"from_x", seg.from_x}, {"half_width", seg.half_width}});
  json obstacles = json::array();
  for (const auto& o : s.obstacles) {
    obstacles.push_back({{"kind", to_string(o.kind)},
                         {"x", o.center.x},
                         {"y", o.center.y},
                         {"radius", o.radius},
                         {"vx", o.velocity.x},
                         {"vy", o.velocity.y}});
  }
  return {{"name", s.name},     {"corridor", corridor}, {"length", s.length},
          {"obstacles", obstacles}, {"start", json_util::to_json(s.start)},
          {"goal_x", s.goal_x}, {"max_ticks", s.max_ticks}};
}

Scenario scenario_parse(const json& j) {
  reject_unknown(j, {"name", "corridor", "length", "obstacles", "start", "goal_x", "max_ticks"}, "scenario");
  Scenario s;
  s.name = j.value("name", std::string("custom"));
  if (j.contains("corridor")) {
    s.corridor.clear();
    for (const auto& seg : j.at("corridor")) {
      reject_unknown(seg, {"from_x", "half_width"}, "corridor segment");
      s.corridor.push_back({seg.value("from_x", 0.0), seg.at("half_width").get<double>()});
    }
  }
  s.length = j.value("length", s.length);
  if (j.contains("obstacles")) {
    for (const auto& oj : j.at("obstacles")) {
      reject_unknown(oj, {"kind", "x", "y", "radius", "vx", "vy"}, "obstacle");
      Obstacle o;
      o.kind = obstacle_kind_from_string(oj.value("kind", std::string("cone")));
      o.center = {oj.at("x").get<double>(), oj.at("y").get<double>()};
      o.radius = oj.value("radius", o.radius);
      o.velocity = {oj.value("vx", 0.0), oj.value("vy", 0.0)};
      s.obstacles.push_back(o);
    }
  }
  if (j.contains("start")) s.start = json_util::state_from_json(j.at("start"));
  s.goal_x = j.value("goal_x", s.goal_x);
  s.max_ticks = j.value("max_ticks", s.max_ticks);
  s.validate();
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json camera_json(const CameraSpec& c) {
  return {{"fov_deg", c.fov_deg}, {"width", c.width}, {"height", c.height}, {"max_range", c.max_range}};
}

json latency_json(const LatencyModel& m) {
  return {{"kind", m.kind == LatencyModel::Kind::gaussian ? "gaussian" : "fixed"},
          {"mean", m.mean},
          {"stddev", m.stddev}};
}

json endpoint_json(const EndpointConfig& e) {
  return {{"base_url", e.base_url}, {"model", e.model}, {"api_key_env", e.api_key_env}, {"timeout_s", e.timeout_s}};
}

// Every leaf of the fixed-shape sections can be overridden by an SFD_*
// variable named after its path, e.g. loop.latency.mean -> SFD_LOOP_LATENCY_MEAN.
void apply_env(json& node, const std::string& prefix) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    std::string name = prefix + "_" + it.key();
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    if (it->is_object()) {
      apply_env(*it, name);
      continue;
    }
    const char* value = std::getenv(name.c_str());
    if (value == nullptr) continue;
    if (it->is_string()) {
      *it = std::string(value);
    } else {
      try {
        *it = json::parse(value);
      } catch (const json::exception&) {
        throw ConfigError("environment variable " + name + " is not a valid value");
      }
    }
  }
}

}  // namespace

std::string scenario_to_json(const Scenario& s) { return scenario_json(s).dump(2); }

Scenario scenario_from_json(const std::string& text) {
  try {
    return scenario_parse(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad scenario JSON: ") + e.what());
  }
}

Scenario load_scenario(const std::string& spec, const std::map<std::string, Scenario>& overrides) {
  std::string name = spec;
  const bool builtin = spec.rfind("builtin:", 0) == 0;
  if (builtin) name = spec.substr(8);
  if (auto it = overrides.find(name); it != overrides.end()) return it->second;
  const auto& names = scenario_names();
  if (builtin || std::find(names.begin(), names.end(), name) != names.end()) return scenario_library(name);
  return scenario_from_json(read_file(spec));
}

ProjectConfig ProjectConfig::load(const std::string& path) {
  if (path.empty()) return from_json("{}");
  return from_json(read_file(path));
}

ProjectConfig ProjectConfig::from_json(const std::string& text, bool env) {
  ProjectConfig cfg;
  json merged = json::parse(cfg.to_json());
  json file;
  try {
    file = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(file, {"paths", "camera", "loop", "endpoints", "scenario_overrides"}, "config");
  if (file.contains("paths")) reject_unknown(file["paths"], {"datasets", "checkpoints", "reports"}, "paths");
  if (file.contains("camera")) reject_unknown(file["camera"], {"fov_deg", "width", "height", "max_range"}, "camera");
  if (file.contains("loop")) {
    reject_unknown(file["loop"], {"d", "max_ticks", "lookahead", "latency"}, "loop");
    if (file["loop"].contains("latency")) {
      reject_unknown(file["loop"]["latency"], {"kind", "mean", "stddev"}, "loop.latency");
    }
  }
  merged.merge_patch(file);

  json fixed = {{"paths", merged["paths"]}, {"camera", merged["camera"]}, {"loop", merged["loop"]}};
  if (env) apply_env(fixed, "SFD");

  try {
    const auto& p = fixed["paths"];
    cfg.datasets_dir = p.at("datasets").get<std::string>();
    cfg.checkpoints_dir = p.at("checkpoints").get<std::string>();
    cfg.reports_dir = p.at("reports").get<std::string>();
    const auto& c = fixed["camera"];
    cfg.camera.fov_deg = c.at("fov_deg").get<double>();
    cfg.camera.width = c.at("width").get<int>();
    cfg.camera.height = c.at("height").get<int>();
    cfg.camera.max_range = c.at("max_range").get<double>();
    const auto& l = fixed["loop"];
    cfg.loop.d = l.at("d").get<double>();
    cfg.loop.max_ticks = l.at("max_ticks").get<int>();
    cfg.loop.lookahead = l.at("lookahead").get<double>();
    const auto& lat = l.at("latency");
    const auto kind = lat.at("kind").get<std::string>();
    if (kind == "fixed") {
      cfg.loop.latency = LatencyModel::fixed(lat.at("mean").get<double>());
    } else if (kind == "gaussian") {
      cfg.loop.latency = LatencyModel::gaussian(lat.at("mean").get<double>(), lat.at("stddev").get<double>());
    } else {
      throw ConfigError("unknown latency kind '" + kind + "'");
    }
    for (const auto& [name, ej] : merged["endpoints"].items()) {
      reject_unknown(ej, {"base_url", "model", "api_key_env", "timeout_s"}, "endpoint " + name);
      EndpointConfig e;
      e.base_url = ej.at("base_url").get<std::string>();
      e.model = ej.value("model", std::string());
      e.api_key_env = ej.value("api_key_env", std::string());
      e.timeout_s = ej.value("timeout_s", 30.0);
      e.validate();
      cfg.endpoints[name] = e;
    }
    for (const auto& [name, sj] : merged["scenario_overrides"].items()) {
      Scenario s = scenario_parse(sj);
      s.name = name;
      cfg.scenario_overrides[name] = s;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.camera.validate();
  if (!(cfg.loop.d > 0.0)) throw ConfigError("loop.d must be positive");
  if (!(cfg.loop.lookahead > 0.0)) throw ConfigError("loop.lookahead must be positive");
  for (const auto* dir : {&cfg.datasets_dir, &cfg.checkpoints_dir, &cfg.reports_dir}) {
    if (!std::filesystem::is_directory(*dir)) throw ConfigError("configured directory '" + *dir + "' does not exist");
  }
  return cfg;
}

std::string ProjectConfig::to_json() const {
  json endpoints_j = json::object();
  for (const auto& [name, e] : endpoints) endpoints_j[name] = endpoint_json(e);
  json overrides_j = json::object();
  for (const auto& [name, s] : scenario_overrides) overrides_j[name] = scenario_json(s);
  json j = {{"paths", {{"datasets", datasets_dir}, {"checkpoints", checkpoints_dir}, {"reports", reports_dir}}},
            {"camera", camera_json(camera)},
            {"loop",
             {{"d", loop.d}, {"max_ticks", loop.max_ticks}, {"lookahead", loop.lookahead},
              {"latency", latency_json(loop.latency)}}},
            {"endpoints", endpoints_j},
            {"scenario_overrides", overrides_j}};
  return j.dump(2);
}

}  // namespace sfd
