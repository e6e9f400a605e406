#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "sfd/error.hpp"
#include "sfd/store.hpp"

using namespace sfd;

TEST_CASE("config defaults and file values") {
  const ProjectConfig d = ProjectConfig::from_json("{}", false);
  CHECK(d.camera.width == 96);
  CHECK(d.loop.d == doctest::Approx(1.0 / 60.0));

  const ProjectConfig c = ProjectConfig::from_json(R"({
    "camera": {"width": 64},
    "loop": {"lookahead": 12.5, "latency": {"kind": "gaussian", "mean": 7.76, "stddev": 0.56}},
    "endpoints": {"local": {"base_url": "http://127.0.0.1:8000/v1", "model": "llava"}}})", false);
  CHECK(c.camera.width == 64);
  CHECK(c.camera.height == 48);
  CHECK(c.loop.lookahead == 12.5);
  CHECK(c.loop.latency.kind == LatencyModel::Kind::gaussian);
  CHECK(c.endpoints.at("local").model == "llava");

  const ProjectConfig back = ProjectConfig::from_json(c.to_json(), false);
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("unknown config keys are rejected") {
  CHECK_THROWS_AS(ProjectConfig::from_json(R"({"cameras": {}})", false), ConfigError);
  CHECK_THROWS_AS(ProjectConfig::from_json(R"({"camera": {"fov": 90}})", false), ConfigError);
  CHECK_THROWS_AS(ProjectConfig::from_json(R"({"loop": {"latency": {"median": 1}}})", false), ConfigError);
  CHECK_THROWS_AS(ProjectConfig::from_json(R"({"endpoints": {"x": {"url": "http://a"}}})", false), ConfigError);
  CHECK_THROWS_AS(ProjectConfig::from_json("{", false), ConfigError);
}

TEST_CASE("missing directories are rejected") {
  CHECK_THROWS_AS(ProjectConfig::from_json(R"({"paths": {"datasets": "/nonexistent/sfd/dir"}})", false), ConfigError);
  CHECK_THROWS_AS(ProjectConfig::load("/nonexistent/sfd/config.json"), ConfigError);
}

TEST_CASE("SFD_ environment variables override the file") {
  ::setenv("SFD_LOOP_LATENCY_MEAN", "2.5", 1);
  ::setenv("SFD_CAMERA_WIDTH", "128", 1);
  const ProjectConfig c = ProjectConfig::from_json(R"({"camera": {"width": 64}})");
  ::unsetenv("SFD_LOOP_LATENCY_MEAN");
  ::unsetenv("SFD_CAMERA_WIDTH");
  CHECK(c.loop.latency.mean == 2.5);
  CHECK(c.camera.width == 128);

  ::setenv("SFD_CAMERA_WIDTH", "wide", 1);
  CHECK_THROWS_AS(ProjectConfig::from_json("{}"), ConfigError);
  ::unsetenv("SFD_CAMERA_WIDTH");
}

TEST_CASE("scenario JSON round-trips and loads from files") {
  for (const auto& name : scenario_names()) {
    const Scenario s = scenario_library(name);
    const Scenario back = scenario_from_json(scenario_to_json(s));
    CHECK(scenario_to_json(back) == scenario_to_json(s));
    CHECK(back.obstacles.size() == s.obstacles.size());
  }
  CHECK(load_scenario("builtin:S110").name == "S110");
  CHECK(load_scenario("S011").name == "S011");

  const auto path = (std::filesystem::temp_directory_path() / "sfd_test_scenario.json").string();
  {
    std::ofstream os(path);
    os << R"({"name": "custom", "length": 12, "goal_x": 10,
              "obstacles": [{"kind": "bin", "x": 5, "y": 0.3, "radius": 0.2}]})";
  }
  const Scenario s = load_scenario(path);
  CHECK(s.name == "custom");
  REQUIRE(s.obstacles.size() == 1);
  CHECK(s.obstacles[0].kind == ObstacleKind::bin);
  std::filesystem::remove(path);

  std::map<std::string, Scenario> overrides{{"S010", s}};
  CHECK(load_scenario("S010", overrides).name == "custom");
  CHECK_THROWS_AS(scenario_from_json(R"({"obstacles": [{"x": 1, "y": 0, "colour": "red"}]})"), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(R"({"goal_x": -5})"), InvalidInput);
  CHECK_THROWS(load_scenario("/nonexistent/scenario.json"));
}
