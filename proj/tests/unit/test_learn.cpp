#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "oracles.hpp"
#include "sfd/error.hpp"
#include "sfd/learn.hpp"

using namespace sfd;

using testing::max_gradient_error;
using testing::random_batch;

TEST_CASE("loss closed forms") {
  Sample s;
  s.y_s = 0.3;
  s.y_t = 0.4;
  s.y_c = 2;
  PolicyOutput out;
  out.V[2] = {0.3, 0.4};
  out.p = {0.0, 0.0, 1.0};
  CHECK(loss(out, s, 1.0) == 0.0);

  out.p = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(loss(out, s, 1.0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(loss(out, s, 1.0) == doctest::Approx(1.0986).epsilon(1e-4));

  // rows other than y_c are masked out
  const double before = loss(out, s, 1.0);
  out.V[0] = {0.9, 0.9};
  out.V[1] = {-0.9, 0.1};
  CHECK(loss(out, s, 1.0) == before);

  // p[y_c] = 0 is clamped rather than infinite
  out.p = {0.5, 0.5, 0.0};
  CHECK(std::isfinite(loss(out, s, 1.0)));
  CHECK(loss(out, s, 1.0) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("loss is the action term plus k times the cross entropy") {
  const PolicyNet net(NetConfig::standard(), 2);
  for (const auto& s : random_batch(net.config(), 9, 4)) {
    const PolicyOutput out = forward(net, s.obs);
    for (double k : {0.0, 0.5, 1.0, 3.0}) {
      const LossTerms t = loss_terms(out, s, k);
      CHECK(t.total == t.action + k * t.ce);
      CHECK(loss(out, s, k) == t.total);
    }
  }
}

TEST_CASE("invalid labels are rejected") {
  PolicyOutput out;
  out.p = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  Sample s;
  s.y_c = 3;
  CHECK_THROWS_AS(loss(out, s, 1.0), InvalidInput);
  s.y_c = 0;
  s.y_t = 1.5;
  CHECK_THROWS_AS(loss(out, s, 1.0), InvalidInput);
  const PolicyNet net(testing::tiny_config(), 1);
  CHECK_THROWS_AS(grad(net, {}, 1.0), InvalidInput);
}

TEST_CASE("gradient matches central finite differences") {
  const NetConfig cfg = testing::tiny_config();
  PolicyNet net(cfg, 21);
  REQUIRE(net.parameter_count() <= 5000);
  const auto batch = random_batch(cfg, 6, 8);
  for (double k : {1.0, 0.3}) {
    CAPTURE(k);
    CHECK(max_gradient_error(net, batch, k) < 1e-4);
  }
}

TEST_CASE("k = 0 sends no gradient into the class head") {
  const PolicyNet net(testing::tiny_config(), 3);
  const auto batch = random_batch(net.config(), 5, 1);
  const ParamGradients g = grad(net, batch, 0.0);
  for (std::size_t t = net.class_head_index(); t < net.class_head_index() + 2; ++t) {
    for (double v : g.tensors[t]) REQUIRE(v == 0.0);
  }
}

TEST_CASE("V rows for unlabelled classes get no gradient") {
  const PolicyNet net(testing::tiny_config(), 3);
  auto batch = random_batch(net.config(), 4, 2);
  for (auto& s : batch) s.y_c = 1;
  const ParamGradients g = grad(net, batch, 1.0);
  const std::size_t features = net.trunk_output_size();
  const auto& w = g.tensors[net.value_head_index()];
  const auto& b = g.tensors[net.value_head_index() + 1];
  for (std::size_t row : {0u, 1u, 4u, 5u}) {
    for (std::size_t j = 0; j < features; ++j) REQUIRE(w[row * features + j] == 0.0);
    CHECK(b[row] == 0.0);
  }
  bool any = false;
  for (std::size_t j = 0; j < features; ++j) any = any || w[2 * features + j] != 0.0;
  CHECK(any);
}

TEST_CASE("a duplicated sample gives the same mean gradient") {
  const PolicyNet net(testing::tiny_config(), 9);
  const auto one = random_batch(net.config(), 1, 5);
  const std::vector<Sample> two{one[0], one[0]};
  const ParamGradients a = grad(net, one, 1.0);
  const ParamGradients b = grad(net, two, 1.0);
  for (std::size_t t = 0; t < a.tensors.size(); ++t) {
    for (std::size_t i = 0; i < a.tensors[t].size(); ++i) {
      REQUIRE(b.tensors[t][i] == doctest::Approx(a.tensors[t][i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient does not depend on the thread count") {
  const PolicyNet net(NetConfig::standard(), 4);
  const auto batch = random_batch(net.config(), 70, 6);
  const ParamGradients a = grad(net, batch, 1.0, 1);
  const ParamGradients b = grad(net, batch, 1.0, 4);
  CHECK(a.tensors == b.tensors);
  CHECK(a.mean_loss == b.mean_loss);
}

TEST_CASE("a single sample is memorised") {
  const NetConfig cfg = testing::tiny_config();
  DemoDataset data;
  auto s = random_batch(cfg, 1, 3);
  s[0].y_s = 0.4;
  s[0].y_t = 0.6;
  data.append_route(s, Instruction::right);
  TrainConfig tc;
  tc.epochs = 400;
  tc.batch_size = 1;
  tc.learning_rate = 0.05;
  const TrainResult r = train(PolicyNet(cfg, 1), data, tc);
  REQUIRE(r.loss_curve.size() == 400);
  CHECK(loss(forward(r.net, s[0].obs), data.samples[0], 1.0) < 1e-3);
}

TEST_CASE("training is deterministic for a seed") {
  const NetConfig cfg = testing::tiny_config();
  DemoDataset data;
  data.append_route(random_batch(cfg, 40, 1), Instruction::left);
  data.append_route(random_batch(cfg, 40, 2), Instruction::right);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 8;
  const TrainResult a = train(PolicyNet(cfg, 1), data, tc, {}, 1);
  const TrainResult b = train(PolicyNet(cfg, 1), data, tc, {}, 3);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(encode_checkpoint(a.net) == encode_checkpoint(b.net));
  tc.seed = 1;
  CHECK(train(PolicyNet(cfg, 1), data, tc).loss_curve != a.loss_curve);
}

TEST_CASE("a non-finite loss aborts training") {
  const NetConfig cfg = testing::tiny_config();
  DemoDataset data;
  data.append_route(random_batch(cfg, 4, 1), Instruction::left);
  PolicyNet net(cfg, 1);
  net.params()[net.class_head_index() + 1].values[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(train(net, data, tc), TrainingError);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.k = -1.0;
  CHECK_THROWS_AS(tc.validate(), InvalidInput);
  tc = TrainConfig{};
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), InvalidInput);
}

TEST_CASE("mirrored sample") {
  Rng rng(1);
  Sample s;
  s.obs = testing::random_obs(6, 3, rng);
  s.y_s = 0.25;
  s.y_t = 0.5;
  s.y_c = 0;
  const Sample m = mirrored(s);
  CHECK(m.y_s == -0.25);
  CHECK(m.y_t == 0.5);
  CHECK(m.y_c == 2);
  CHECK(m.obs.at(1, 0) == s.obs.at(1, 5));
  CHECK(mirrored(m).obs == s.obs);
}

TEST_CASE("route spans partition the dataset") {
  DemoDataset d;
  d.append_route(std::vector<Sample>(3), Instruction::left);
  d.append_route(std::vector<Sample>(2), Instruction::middle);
  CHECK_NOTHROW(d.validate());
  CHECK(d.samples[4].y_c == 1);
  d.samples[4].y_c = 0;
  CHECK_THROWS_AS(d.validate(), InvalidInput);
  d.samples[4].y_c = 1;
  d.routes[1].length = 1;
  CHECK_THROWS_AS(d.validate(), InvalidInput);
}

TEST_CASE("expert routes pass the obstacle on the commanded side") {
  const Scenario s010 = scenario_library("S010");
  const Obstacle& cone = s010.obstacles[0];
  ScriptedExpert expert;
  for (Instruction route : {Instruction::left, Instruction::right}) {
    VehicleState st = s010.start;
    double best = 1e9, passing_y = 0.0;
    for (int tick = 0; tick < 1200 && st.pose.x < s010.goal_x; ++tick) {
      st = step_dynamics(st, expert.drive(st, s010, tick / 60.0, route), 1.0 / 60.0);
      REQUIRE_FALSE(check_collision(st, s010, (tick + 1) / 60.0).any());
      const double d = std::hypot(st.pose.x - cone.center.x, st.pose.y - cone.center.y);
      if (d < best) {
        best = d;
        passing_y = st.pose.y;
      }
    }
    CHECK(st.pose.x >= s010.goal_x);
    // +y is the right-hand side
    if (route == Instruction::left) CHECK(passing_y < cone.center.y);
    else CHECK(passing_y > cone.center.y);
  }
}

TEST_CASE("collected demos: class balance, ranges, size and MIDDLE steering") {
  const Scenario s010 = scenario_library("S010");
  ScriptedExpert expert;
  CollectConfig cc;
  const DemoDataset d = collect_demos(s010, expert, cc);
  CHECK_NOTHROW(d.validate());
  REQUIRE(d.routes.size() == 60);
  std::array<int, 3> per_class{};
  for (const auto& r : d.routes) ++per_class[static_cast<std::size_t>(index_of(r.label))];
  CHECK(per_class == std::array<int, 3>{20, 20, 20});
  for (const auto& s : d.samples) {
    REQUIRE(std::abs(s.y_s) <= 1.0);
    REQUIRE((s.y_t >= 0.0 && s.y_t <= 1.0));
    REQUIRE(s.obs.width == cc.camera.width);
  }
  // about 80 frames per route at 20 fps
  CHECK(d.samples.size() > 60 * 60);
  CHECK(d.samples.size() < 60 * 110);

  // with start jitter and noise off, MIDDLE routes drive straight
  CollectConfig quiet;
  quiet.routes = 6;
  quiet.lateral_jitter = quiet.heading_jitter_deg = 0.0;
  quiet.middle_lateral_jitter = quiet.middle_heading_jitter_deg = 0.0;
  quiet.steering_noise = 0.0;
  const DemoDataset q = collect_demos(s010, expert, quiet);
  double sum = 0.0;
  int n = 0;
  for (const auto& s : q.samples) {
    if (s.y_c != 1) continue;
    sum += std::abs(s.y_s);
    ++n;
  }
  REQUIRE(n > 0);
  CHECK(sum / n < 0.05);

  CHECK_THROWS_AS(collect_demos(s010, expert, [] { CollectConfig c; c.fps = 25.0; return c; }()), InvalidInput);
}

TEST_CASE("collection is deterministic for a seed") {
  ScriptedExpert e1, e2;
  CollectConfig cc;
  cc.routes = 6;
  const DemoDataset a = collect_demos(scenario_library("S010"), e1, cc);
  const DemoDataset b = collect_demos(scenario_library("S010"), e2, cc);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) REQUIRE(a.samples[i].obs == b.samples[i].obs);
}

TEST_CASE("dataset files round-trip losslessly") {
  ScriptedExpert expert;
  CollectConfig cc;
  cc.routes = 4;
  DemoDataset d = collect_demos(scenario_library("S010"), expert, cc);
  d.samples[0].y_s = 0.1234567890123;
  const auto dir = std::filesystem::temp_directory_path();
  for (const char* name : {"sfd_test_demo.jsonl", "sfd_test_demo.jsonl.gz"}) {
    const auto path = (dir / name).string();
    write_dataset(d, path);
    const DemoDataset back = read_dataset(path);
    REQUIRE(back.samples.size() == d.samples.size());
    REQUIRE(back.routes.size() == d.routes.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      REQUIRE(back.samples[i].obs == d.samples[i].obs);
      REQUIRE(back.samples[i].y_s == d.samples[i].y_s);
      REQUIRE(back.samples[i].y_t == d.samples[i].y_t);
      REQUIRE(back.samples[i].y_c == d.samples[i].y_c);
    }
    for (std::size_t r = 0; r < d.routes.size(); ++r) {
      CHECK(back.routes[r].start == d.routes[r].start);
      CHECK(back.routes[r].length == d.routes[r].length);
      CHECK(back.routes[r].label == d.routes[r].label);
    }
    std::filesystem::remove(path);
  }
  CHECK_THROWS(read_dataset((dir / "sfd_does_not_exist.jsonl").string()));
}
