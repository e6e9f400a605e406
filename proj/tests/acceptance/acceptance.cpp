// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any of them failed.
//
// The pipeline is fixed in advance: seed 0 everywhere, default collection
// and training settings, 30 trials per cell. Nothing here is tuned to the
// outcome.

#include <cstdarg>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "sfd/eval.hpp"
#include "sfd/learn.hpp"
#include "sfd/loop.hpp"
#include "sfd/planner.hpp"
#include "sfd/store.hpp"

using namespace sfd;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 0;
constexpr int kTrials = 30;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s  %-22s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

ModelSetup solo() {
  ModelSetup m;
  m.source = InstructionSource::self_sampled();
  return m;
}

ModelSetup hybrid(LatencyModel latency, double lookahead) {
  ModelSetup m;
  m.latency = latency;
  m.lookahead = lookahead;
  return m;
}

double rate(const PolicyNet& net, const std::string& scenario, const ModelSetup& model) {
  EvalPlan plan;
  plan.scenarios = {scenario};
  plan.models = {model};
  plan.trials = kTrials;
  plan.seed_base = kSeed;
  return run_eval(plan, net).cells.at(0).success_rate;
}

void gradient_gate() {
  const auto t0 = Clock::now();
  const NetConfig cfg = testing::tiny_config();
  const PolicyNet net(cfg, kSeed);
  const double err = testing::max_gradient_error(net, testing::random_batch(cfg, 6, kSeed), 1.0);
  const double secs = since(t0);
  report(net.parameter_count() <= 5000 && err < 1e-4 && secs < 30.0, "gradient_gate",
         fmt("params=%zu max_rel_err=%.2e time=%.1fs", net.parameter_count(), err, secs));
}

PolicyNet mastery() {
  const auto t0 = Clock::now();
  ScriptedExpert expert;
  CollectConfig cc;
  cc.seed = kSeed;
  const DemoDataset data = collect_demos(scenario_library("S010"), expert, cc);
  TrainConfig tc;
  tc.seed = kSeed;
  const int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  TrainResult trained = train(PolicyNet(NetConfig::standard(), kSeed), data, tc, {}, threads);
  const double train_secs = since(t0);
  const double r = rate(trained.net, "S010", hybrid(LatencyModel::fixed(0.0), kDefaultLookahead));
  const double secs = since(t0);
  report(r >= 0.95 && secs < 600.0, "train_scenario_mastery",
         fmt("S010 oracle l=0: %s (%d trials) routes=60 samples=%zu epochs=%d loss %.3f->%.3f "
             "time=%.0fs (train %.0fs)",
             format_percent(r).c_str(), kTrials, data.samples.size(), tc.epochs, trained.loss_curve.front(),
             trained.loss_curve.back(), secs, train_secs));
  return std::move(trained.net);
}

void generalization_gap(const PolicyNet& net) {
  const double s = rate(net, "ZIGZAG", solo());
  const double h = rate(net, "ZIGZAG", hybrid(LatencyModel::gaussian(7.76, 0.56), 30.0));
  report(h - s >= 0.20 && h >= 0.70, "generalization_gap",
         fmt("ZIGZAG solo=%s hybrid(7.76+-0.56 s)=%s gap=%+.2f", format_percent(s).c_str(),
             format_percent(h).c_str(), h - s));
}

void unseen_layouts(const PolicyNet& net) {
  const double s010 = rate(net, "S010", solo());
  const double s110 = rate(net, "S110", solo());
  const double s011 = rate(net, "S011", solo());
  const ModelSetup oracle = hybrid(LatencyModel::fixed(0.0), kDefaultLookahead);
  const double h110 = rate(net, "S110", oracle);
  const double h011 = rate(net, "S011", oracle);
  const bool pass = s010 >= 0.95 && s110 < s010 && s011 < s010 && s110 <= 0.85 && s011 <= 0.85 && h110 >= 0.90 &&
                    h011 >= 0.90;
  report(pass, "unseen_layouts",
         fmt("solo S010=%s S110=%s S011=%s; oracle hybrid S110=%s S011=%s", format_percent(s010).c_str(),
             format_percent(s110).c_str(), format_percent(s011).c_str(), format_percent(h110).c_str(),
             format_percent(h011).c_str()));
}

void latency_independence() {
  // Zero heads make the action independent of the instruction, so any
  // difference between the runs could only come from timing.
  const PolicyNet net = testing::flat_net(kSeed);
  const Scenario corridor = testing::empty_corridor(400.0);
  const double latencies[] = {0.0, 2.0, 7.76, 15.0};
  const std::int64_t expect_first[] = {0, 120, 466, 900};
  bool pass = true;
  std::string detail = "first arrivals:";
  std::int64_t ticks0 = -1;
  VehicleState final0;
  for (int i = 0; i < 4; ++i) {
    LoopConfig cfg;
    cfg.planner = std::make_shared<OraclePlanner>(LatencyModel::fixed(latencies[i]), 30.0);
    cfg.max_ticks = 2000;
    cfg.seed = kSeed;
    const EpisodeResult r = run_episode(corridor, net, cfg);
    std::vector<std::int64_t> arrivals;
    for (std::size_t t = 0; t < r.trace.size(); ++t) {
      pass = pass && r.trace[t].tick == static_cast<std::int64_t>(t);
      for (const auto& e : r.trace[t].planner_events) {
        if (e.kind == PlannerEvent::Kind::arrived) arrivals.push_back(r.trace[t].tick);
      }
    }
    const std::int64_t first = arrivals.empty() ? -1 : arrivals.front();
    pass = pass && first == expect_first[i] && latency_ticks(latencies[i], cfg.d) == expect_first[i];
    for (std::size_t k = 1; k < arrivals.size(); ++k) {
      // at l = 0 the reply lands on the tick it was asked for, so one per tick
      pass = pass && arrivals[k] - arrivals[k - 1] == std::max<std::int64_t>(1, expect_first[i]);
    }
    if (i == 0) {
      ticks0 = r.ticks_run;
      final0 = r.final_state;
    }
    pass = pass && r.ticks_run == ticks0 && r.final_state == final0;
    detail += fmt(" l=%g:%lld", latencies[i], static_cast<long long>(first));
  }
  detail += fmt(" ticks_run=%lld for every l", static_cast<long long>(ticks0));
  report(pass, "latency_independence", detail);
}

void parser_corpus() {
  const std::string dir = std::string(SFD_FIXTURE_DIR) + "/appendixD/";
  std::ifstream tsv(dir + "expected.tsv");
  int total = 0, ok = 0;
  std::string line, bad;
  while (std::getline(tsv, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string name = line.substr(0, tab);
    const std::string verdict = line.substr(tab + 1);
    std::ifstream f(dir + name);
    std::stringstream ss;
    ss << f.rdbuf();
    const auto got = parse_instruction(ss.str());
    const std::string got_s = got ? std::string(to_string(*got)) : "UNPARSEABLE";
    ++total;
    if (f.good() && got_s == verdict) {
      ++ok;
    } else {
      bad += " " + name;
    }
  }
  report(total > 0 && ok == total, "parser_corpus", fmt("%d/%d fixtures match%s", ok, total, bad.c_str()));
}

void collision_oracle() {
  const int mismatches = testing::collision_mismatches(1000, kSeed);
  report(mismatches == 0, "collision_oracle", fmt("1000 random states, %d mismatches", mismatches));
}

int sh(const std::string& args) {
  const std::string cmd = std::string(SFD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / ("sfd_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream plan(dir / "plan.json");
    plan << R"({"scenarios": ["S010", "ZIGZAG"],
               "models": [{"source": "self_sampled"},
                          {"backend": "oracle", "latency": {"kind": "gaussian", "mean": 7.76, "stddev": 0.56},
                           "lookahead": 30}],
               "trials": 3})";
  }
  bool pass = true;
  std::vector<std::string> artifacts;
  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    fs::create_directories(d);
    const std::string p = d.string() + "/";
    pass = pass && sh("collect --scenario S010 --out " + p + "demos.jsonl.gz --seed 0") == 0;
    pass = pass && sh("train --data " + p + "demos.jsonl.gz --out " + p + "model.sfd --epochs 2 --seed 0") == 0;
    pass = pass && sh("run --scenario ZIGZAG --model " + p + "model.sfd --source self_sampled --seed 0 --trace " + p +
                      "solo.jsonl") == 0;
    pass = pass && sh("run --scenario ZIGZAG --model " + p + "model.sfd --latency 7.76 --latency-std 0.56 "
                      "--lookahead 30 --seed 0 --trace " + p + "hybrid.jsonl") == 0;
    pass = pass && sh("eval --plan " + (dir / "plan.json").string() + " --model " + p + "model.sfd --format csv --out " +
                      p + "report.csv") == 0;
  }
  int identical = 0, compared = 0;
  for (const char* f : {"demos.jsonl.gz", "model.sfd", "model.sfd.loss.csv", "solo.jsonl", "hybrid.jsonl", "report.csv"}) {
    const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    ++compared;
    if (!a.empty() && a == b) ++identical;
  }
  fs::remove_all(dir);
  report(pass && identical == compared, "determinism",
         fmt("collect/train/run/eval twice with seed 0: %d/%d artifacts byte-identical", identical, compared));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  gradient_gate();
  const PolicyNet net = mastery();
  generalization_gap(net);
  unseen_layouts(net);
  latency_independence();
  parser_corpus();
  collision_oracle();
  determinism();
  std::printf("%d criteria failed, %.0fs total\n", failures, since(t0));
  return failures == 0 ? 0 : 1;
}
