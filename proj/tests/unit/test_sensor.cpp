#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sfd/error.hpp"
#include "sfd/sensor.hpp"

using namespace sfd;

namespace {

// Columns whose any pixel carries the given intensity.
std::vector<int> columns_with(const Observation& o, float value) {
  std::vector<int> cols;
  for (int c = 0; c < o.width; ++c) {
    for (int r = 0; r < o.height; ++r) {
      if (o.at(r, c) == value) {
        cols.push_back(c);
        break;
      }
    }
  }
  return cols;
}

int span_height(const Observation& o, int col, float value) {
  int n = 0;
  for (int r = 0; r < o.height; ++r) n += o.at(r, col) == value ? 1 : 0;
  return n;
}

// Analytic projection: the column whose ray points closest to the bearing.
int column_for_bearing(const CameraSpec& spec, double bearing) {
  int best = 0;
  for (int c = 1; c < spec.width; ++c) {
    if (std::abs(column_angle(spec, c) - bearing) < std::abs(column_angle(spec, best) - bearing)) best = c;
  }
  return best;
}

Scenario with_cone(double x, double y, double r = 0.15) {
  Scenario s = testing::empty_corridor(40.0);
  s.obstacles.push_back({{x, y}, r, {}, ObstacleKind::cone});
  return s;
}

}  // namespace

TEST_CASE("empty corridor from the centreline is mirror symmetric") {
  const CameraSpec spec;
  const Observation o = render(VehicleState{}, testing::empty_corridor(), 0.0, spec);
  REQUIRE(o.width == spec.width);
  REQUIRE(o.height == spec.height);
  for (int r = 0; r < o.height; ++r) {
    for (int c = 0; c < o.width; ++c) REQUIRE(o.at(r, c) == o.at(r, o.width - 1 - c));
  }
  CHECK(mirror(o) == o);
}

TEST_CASE("nearer obstacles are drawn taller") {
  const int mid = CameraSpec{}.width / 2;
  const Observation near = render(VehicleState{}, with_cone(2.0, 0.0), 0.0);
  const Observation far = render(VehicleState{}, with_cone(4.0, 0.0), 0.0);
  CHECK(span_height(near, mid, intensity::cone) > span_height(far, mid, intensity::cone));
  CHECK(span_height(far, mid, intensity::cone) > 0);
}

TEST_CASE("cone columns sit where the analytic projection puts them") {
  const CameraSpec spec;
  const auto centered = columns_with(render(VehicleState{}, with_cone(3.0, 0.0), 0.0, spec), intensity::cone);
  REQUIRE_FALSE(centered.empty());
  const double mean_c = 0.5 * (centered.front() + centered.back());
  CHECK(std::abs(mean_c - spec.width / 2.0) <= 1.0);

  for (double y : {-0.6, -0.3, 0.4, 0.7}) {
    CAPTURE(y);
    const auto cols = columns_with(render(VehicleState{}, with_cone(3.0, y), 0.0, spec), intensity::cone);
    REQUIRE_FALSE(cols.empty());
    const int expect = column_for_bearing(spec, std::atan2(y, 3.0));
    CHECK(std::abs(0.5 * (cols.front() + cols.back()) - expect) <= 1.0);
    // positive y is on the right, so the cone lands right of centre
    CHECK((expect > spec.width / 2) == (y > 0));
  }
}

TEST_CASE("mirrored columns have exactly opposite angles") {
  const CameraSpec spec;
  for (int c = 0; c < spec.width; ++c) CHECK(column_angle(spec, c) == -column_angle(spec, spec.width - 1 - c));
}

TEST_CASE("kinds render with their own intensity") {
  for (auto kind : {ObstacleKind::cone, ObstacleKind::bin, ObstacleKind::pedestrian, ObstacleKind::car}) {
    Scenario s = testing::empty_corridor(40.0);
    s.obstacles.push_back({{2.0, 0.0}, 0.2, {}, kind});
    const Observation o = render(VehicleState{}, s, 0.0);
    CHECK(span_height(o, o.width / 2, kind_intensity(kind)) > 0);
  }
  CHECK(kind_intensity(ObstacleKind::cone) == 0.9f);
  CHECK(kind_intensity(ObstacleKind::bin) == 0.7f);
  CHECK(kind_intensity(ObstacleKind::pedestrian) == 0.8f);
  CHECK(kind_intensity(ObstacleKind::car) == 0.6f);
}

TEST_CASE("moving obstacles are drawn at their position at time t") {
  Scenario s = testing::empty_corridor(40.0);
  s.obstacles.push_back({{5.0, 0.0}, 0.2, {-1.0, 0.0}, ObstacleKind::car});
  Scenario moved = testing::empty_corridor(40.0);
  moved.obstacles.push_back({{3.0, 0.0}, 0.2, {}, ObstacleKind::car});
  CHECK(render(VehicleState{}, s, 2.0) == render(VehicleState{}, moved, 0.0));
}

TEST_CASE("rendering is translation invariant along a uniform corridor") {
  const Scenario a = with_cone(3.0, 0.3);
  Scenario b = with_cone(3.0 + 7.25, 0.3);
  VehicleState sa;
  sa.pose = {0.0, -0.1, 0.05};
  VehicleState sb = sa;
  sb.pose.x += 7.25;
  CHECK(render(sa, a, 0.0) == render(sb, b, 0.0));
}

TEST_CASE("an obstacle hidden behind another changes nothing") {
  Scenario front = with_cone(2.0, 0.0, 0.2);
  Scenario both = front;
  both.obstacles.push_back({{4.0, 0.0}, 0.05, {}, ObstacleKind::bin});
  CHECK(render(VehicleState{}, front, 0.0) == render(VehicleState{}, both, 0.0));
}

TEST_CASE("pixels stay in [0, 1] for random in-corridor poses") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Scenario z = scenario_library("ZIGZAG");
  for (int i = 0; i < 200; ++i) {
    VehicleState s;
    s.pose = {25.0 + 25.0 * u(rng), 0.8 * u(rng), kPi * u(rng)};
    const Observation o = render(s, z, 0.0);
    for (float p : o.pixels) REQUIRE((p >= 0.0f && p <= 1.0f));
  }
}

TEST_CASE("crop_resize") {
  std::mt19937_64 rng(9);
  const Observation raw = testing::random_obs(64, 32, rng);
  CHECK(crop_resize(raw, {0, 32, 0, 64}, 64, 32) == raw);
  CHECK_THROWS_AS(crop_resize(raw, {0, 33, 0, 64}, 64, 32), InvalidInput);
  CHECK_THROWS_AS(crop_resize(raw, {10, 5, 0, 64}, 64, 32), InvalidInput);
  CHECK_THROWS_AS(crop_resize(raw, {0, 32, 0, 64}, 0, 32), InvalidInput);

  // 640x480 camera frame, rows 140..330 and columns 130..510, to 320x160
  Observation frame(640, 480);
  for (int r = 0; r < 480; ++r) {
    for (int c = 0; c < 640; ++c) frame.at(r, c) = static_cast<float>((r * 640 + c) % 997) / 997.0f;
  }
  const CropRect rect{140, 330, 130, 510};
  CHECK(rect.right - rect.left == 380);
  CHECK(rect.bottom - rect.top == 190);
  const Observation out = crop_resize(frame, rect, 320, 160);
  CHECK(out.width == 320);
  CHECK(out.height == 160);
  CHECK(out.at(0, 0) == frame.at(140, 130));
  CHECK(out.at(159, 319) == frame.at(140 + 159 * 190 / 160, 130 + 319 * 380 / 320));

  // checkerboard halved equals taking every even row and column
  Observation board(32, 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 32; ++c) board.at(r, c) = static_cast<float>(((r / 3) + (c / 5)) % 2);
  }
  const Observation half = crop_resize(board, {0, 16, 0, 32}, 16, 8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 16; ++c) REQUIRE(half.at(r, c) == board.at(2 * r, 2 * c));
  }
}

TEST_CASE("PGM and PNG encodings") {
  std::mt19937_64 rng(4);
  Observation o = testing::random_obs(12, 7, rng);
  for (auto& p : o.pixels) p = std::round(p * 255.0f) / 255.0f;
  const Observation back = decode_pgm(encode_pgm(o));
  REQUIRE(back.width == 12);
  REQUIRE(back.height == 7);
  for (std::size_t i = 0; i < o.pixels.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(o.pixels[i]).epsilon(1e-6));

  const std::string png = encode_png(o);
  REQUIRE(png.size() > 8);
  CHECK(png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
  CHECK(encode_png(o) == png);
}

TEST_CASE("digest tracks pixel content") {
  const Observation a = render(VehicleState{}, with_cone(3.0, 0.0), 0.0);
  const Observation b = render(VehicleState{}, with_cone(3.0, 0.2), 0.0);
  CHECK(observation_digest(a) == observation_digest(render(VehicleState{}, with_cone(3.0, 0.0), 0.0)));
  CHECK(observation_digest(a) != observation_digest(b));
  CHECK(digest_hex(0x0123456789abcdefULL) == "0123456789abcdef");
}

TEST_CASE("camera spec validation") {
  CameraSpec s;
  s.fov_deg = 180.0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = CameraSpec{};
  s.width = 0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}
