// sfd: command-line front end (collect, train, run, eval, serve, parse-corpus).

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "sfd/error.hpp"
#include "sfd/eval.hpp"
#include "sfd/learn.hpp"
#include "sfd/loop.hpp"
#include "sfd/serve.hpp"
#include "sfd/store.hpp"

namespace fs = std::filesystem;
using namespace sfd;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

// Relative output paths land in the configured directory.
std::string under(const std::string& dir, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || dir.empty() || dir == ".") return path;
  return (fs::path(dir) / path).string();
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << text;
  if (!os) throw IoError("write failed for '" + path + "'");
}

std::vector<Instruction> parse_script(const std::string& text) {
  std::vector<Instruction> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto i = instruction_from_string(item);
    if (!i) throw InvalidInput("bad instruction '" + item + "' in script");
    out.push_back(*i);
  }
  return out;
}

LatencyModel latency_model(const ProjectConfig& cfg, double mean, double stddev) {
  if (mean < 0.0) return cfg.loop.latency;
  return stddev > 0.0 ? LatencyModel::gaussian(mean, stddev) : LatencyModel::fixed(mean);
}

// Serve until interrupted or `done` says so.
void serve_blocking(ServeSession& session, unsigned short port, const std::string& address,
                    const std::function<bool(const ServeSession&)>& done,
                    const std::function<void(const ServeSession&)>& on_tick) {
  WsServer::Options opt;
  opt.port = port;
  opt.address = address;
  WsServer server(session, opt);
  std::atomic<bool> finished{false};
  server.on_tick = [&](const ServeSession& s) {
    if (on_tick) on_tick(s);
    if (done && done(s)) finished = true;
  };
  std::cerr << "serving ws://" << address << ":" << server.port() << "/ws (" << to_string(session.mode())
            << ", scenario " << session.scenario().name << ")\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&] {
    while (!g_interrupted && !finished) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  });
  server.run();
  finished = true;
  watcher.join();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid planner/controller driving simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "Project config file (JSON)");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& s) { seed = s; seed_given = true; }, "Seed for every random choice");

  // collect
  auto* collect = app.add_subcommand("collect", "Record expert demonstrations");
  std::string c_scenario = "S010", c_out;
  int c_routes = 60;
  double c_fps = 20.0;
  bool c_teleop = false;
  unsigned short c_port = 8765;
  collect->add_option("--scenario", c_scenario, "Scenario name or JSON file")->capture_default_str();
  collect->add_option("--out", c_out, "Dataset path (.jsonl or .jsonl.gz)")->required();
  collect->add_option("--routes", c_routes, "Number of routes")->capture_default_str()->check(CLI::PositiveNumber);
  collect->add_option("--fps", c_fps, "Recording rate (scripted expert)")->capture_default_str();
  collect->add_flag("--teleop", c_teleop, "Record a human driving through the serve endpoint");
  collect->add_option("--port", c_port, "Port for --teleop")->capture_default_str();

  // train
  auto* trainc = app.add_subcommand("train", "Train the policy on a dataset");
  std::string t_data, t_out, t_init;
  TrainConfig tc;
  int t_threads = 1;
  bool t_mirror = false;
  trainc->add_option("--data", t_data, "Dataset path")->required();
  trainc->add_option("--out", t_out, "Checkpoint path")->required();
  trainc->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--lr", tc.learning_rate, "Learning rate")->capture_default_str();
  trainc->add_option("--batch", tc.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--k", tc.k, "Weight of the class cross-entropy")->capture_default_str();
  trainc->add_option("--threads", t_threads, "Worker threads (result does not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  trainc->add_option("--init", t_init, "Start from this checkpoint instead of a fresh net");
  trainc->add_flag("--mirror", t_mirror, "Mirror augmentation (off by default)");

  // run
  auto* runc = app.add_subcommand("run", "Run one closed-loop episode");
  std::string r_scenario, r_model, r_planner = "oracle", r_source = "planner", r_script, r_trace, r_endpoint,
                          r_prompt = "cot";
  double r_latency = -1.0, r_latency_std = 0.0, r_lookahead = -1.0;
  int r_max_ticks = -1;
  bool r_wall = false;
  runc->add_option("--scenario", r_scenario, "Scenario name or JSON file")->required();
  runc->add_option("--model", r_model, "Checkpoint")->required();
  runc->add_option("--planner", r_planner, "oracle | scripted | vlm")->capture_default_str();
  runc->add_option("--source", r_source, "planner | self_sampled | fixed:LEFT")->capture_default_str();
  runc->add_option("--latency", r_latency, "Planner latency mean in seconds (default from config)");
  runc->add_option("--latency-std", r_latency_std, "Gaussian latency standard deviation");
  runc->add_option("--lookahead", r_lookahead, "Oracle lookahead in metres");
  runc->add_option("--script", r_script, "Scripted planner sequence, e.g. RIGHT,LEFT");
  runc->add_option("--endpoint", r_endpoint, "Endpoint name from the config (vlm planner)");
  runc->add_option("--prompt", r_prompt, "naive | cot")->capture_default_str();
  runc->add_option("--max-ticks", r_max_ticks, "Tick limit (0: scenario's own)");
  runc->add_flag("--wall-clock", r_wall, "Real-time loop with a background planner thread");
  runc->add_option("--trace", r_trace, "Write the per-tick trace (JSON Lines)");

  // eval
  auto* evalc = app.add_subcommand("eval", "Success rates over scenarios and models");
  std::string e_plan, e_model, e_format = "markdown", e_out;
  int e_trials = 0;
  evalc->add_option("--plan", e_plan, "Eval plan (JSON)")->required();
  evalc->add_option("--model", e_model, "Checkpoint")->required();
  evalc->add_option("--format", e_format, "csv | markdown")->capture_default_str()->check(CLI::IsMember({"csv", "markdown"}));
  evalc->add_option("--trials", e_trials, "Override the plan's trial count");
  evalc->add_option("--out", e_out, "Write the report here instead of stdout");

  // serve
  auto* servec = app.add_subcommand("serve", "WebSocket service for the teleop UI");
  std::string s_scenario = "S010", s_mode = "teleop", s_model, s_record, s_trace, s_address = "127.0.0.1";
  unsigned short s_port = 8765;
  double s_latency = -1.0, s_latency_std = 0.0;
  int s_frame_every = 4;
  servec->add_option("--port", s_port, "Port")->capture_default_str();
  servec->add_option("--address", s_address, "Bind address")->capture_default_str();
  servec->add_option("--scenario", s_scenario, "Scenario name or JSON file")->capture_default_str();
  servec->add_option("--mode", s_mode, "teleop | watch")->capture_default_str()->check(CLI::IsMember({"teleop", "watch"}));
  servec->add_option("--model", s_model, "Checkpoint (watch mode)");
  servec->add_option("--latency", s_latency, "Oracle latency mean in seconds (watch mode)");
  servec->add_option("--latency-std", s_latency_std, "Gaussian latency standard deviation");
  servec->add_option("--frame-every", s_frame_every, "Send a frame every n ticks")->capture_default_str();
  servec->add_option("--record", s_record, "Write recorded teleop routes to this dataset");
  servec->add_option("--trace", s_trace, "Write the last episode's trace on exit");

  // parse-corpus
  auto* corpus = app.add_subcommand("parse-corpus", "Parse recorded planner responses");
  std::string p_dir;
  corpus->add_option("dir", p_dir, "Directory of *.txt responses, optionally with expected.tsv")
      ->required()
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ProjectConfig cfg = ProjectConfig::load(config_path);

    if (*collect) {
      const Scenario scenario = load_scenario(c_scenario, cfg.scenario_overrides);
      const std::string out = under(cfg.datasets_dir, c_out);
      if (!c_teleop) {
        CollectConfig cc;
        cc.routes = c_routes;
        cc.fps = c_fps;
        cc.seed = seed;
        cc.camera = cfg.camera;
        ScriptedExpert expert;
        const DemoDataset data = collect_demos(scenario, expert, cc);
        write_dataset(data, out);
        std::cout << "wrote " << data.routes.size() << " routes, " << data.samples.size() << " samples to " << out
                  << "\n";
        return 0;
      }
      ServeConfig sc;
      sc.scenario = scenario;
      sc.camera = cfg.camera;
      sc.d = cfg.loop.d;
      ServeSession session(sc);
      std::size_t written = 0;
      serve_blocking(
          session, c_port, "127.0.0.1",
          [&](const ServeSession& s) { return s.recorded().routes.size() >= static_cast<std::size_t>(c_routes); },
          [&](const ServeSession& s) {
            if (s.recorded().routes.size() == written) return;
            written = s.recorded().routes.size();
            write_dataset(s.recorded(), out);
            std::cerr << "recorded route " << written << "\n";
          });
      std::cout << "wrote " << written << " routes to " << out << "\n";
      return 0;
    }

    if (*trainc) {
      const DemoDataset data = read_dataset(t_data);
      tc.seed = seed;
      tc.mirror = t_mirror;
      PolicyNet net = t_init.empty() ? PolicyNet(NetConfig::standard(), seed) : load_checkpoint(t_init);
      const TrainResult r = train(
          std::move(net), data, tc,
          [](int epoch, double l) { std::cerr << "epoch " << epoch << " loss " << l << "\n"; }, t_threads);
      const std::string out = under(cfg.checkpoints_dir, t_out);
      save_checkpoint(r.net, out);
      std::ostringstream curve;
      curve << "epoch,loss\n";
      for (std::size_t i = 0; i < r.loss_curve.size(); ++i) curve << i << ',' << r.loss_curve[i] << '\n';
      write_text(out + ".loss.csv", curve.str());
      std::cout << "wrote " << out << " and " << out << ".loss.csv\n";
      return 0;
    }

    if (*runc) {
      const Scenario scenario = load_scenario(r_scenario, cfg.scenario_overrides);
      const PolicyNet net = load_checkpoint(r_model);
      LoopConfig lc;
      lc.d = cfg.loop.d;
      lc.source = instruction_source_from_string(r_source);
      lc.mode = r_wall ? LoopMode::wall_clock : LoopMode::virtual_time;
      lc.max_ticks = r_max_ticks >= 0 ? r_max_ticks : cfg.loop.max_ticks;
      lc.seed = seed;
      lc.camera = cfg.camera;
      if (lc.source.kind == InstructionSource::Kind::planner) {
        const LatencyModel lat = latency_model(cfg, r_latency, r_latency_std);
        const PlannerKind kind = planner_kind_from_string(r_planner);
        if (kind == PlannerKind::oracle) {
          lc.planner = std::make_shared<OraclePlanner>(lat, r_lookahead > 0.0 ? r_lookahead : cfg.loop.lookahead);
        } else if (kind == PlannerKind::scripted) {
          if (r_script.empty()) throw InvalidInput("--planner scripted needs --script");
          lc.planner = std::make_shared<ScriptedPlanner>(lat, parse_script(r_script));
        } else {
          const auto it = cfg.endpoints.find(r_endpoint);
          if (it == cfg.endpoints.end()) throw ConfigError("no endpoint named '" + r_endpoint + "' in the config");
          if (!r_wall) {
            std::cerr << "note: vlm planner runs in wall-clock mode\n";
            lc.mode = LoopMode::wall_clock;
          }
          lc.planner = std::make_shared<VlmPlanner>(lat, it->second, prompt_style_from_string(r_prompt));
        }
      }
      const EpisodeResult result = run_episode(scenario, net, lc);
      if (!r_trace.empty()) {
        std::ofstream os(r_trace, std::ios::binary);
        if (!os) throw IoError("cannot write '" + r_trace + "'");
        write_trace(result.trace, os);
      }
      std::cout << episode_summary_json(result, scenario.name) << "\n";
      return 0;
    }

    if (*evalc) {
      EvalPlan plan = eval_plan_from_json(read_text(e_plan));
      if (seed_given) plan.seed_base = seed;
      if (e_trials > 0) plan.trials = e_trials;
      plan.camera = cfg.camera;
      plan.d = cfg.loop.d;
      const PolicyNet net = load_checkpoint(e_model);
      const SuccessReport report = run_eval(plan, net);
      const std::string text = emit_report(report, e_format == "csv" ? ReportFormat::csv : ReportFormat::markdown);
      if (e_out.empty()) {
        std::cout << text;
      } else {
        write_text(under(cfg.reports_dir, e_out), text);
      }
      return 0;
    }

    if (*servec) {
      ServeConfig sc;
      sc.scenario = load_scenario(s_scenario, cfg.scenario_overrides);
      sc.mode = serve_mode_from_string(s_mode);
      sc.d = cfg.loop.d;
      sc.frame_every = s_frame_every;
      sc.camera = cfg.camera;
      sc.latency = latency_model(cfg, s_latency, s_latency_std);
      sc.lookahead = cfg.loop.lookahead;
      sc.seed = seed;
      if (!s_model.empty()) sc.net = std::make_shared<PolicyNet>(load_checkpoint(s_model));
      ServeSession session(sc);
      std::size_t written = 0;
      const std::string record = under(cfg.datasets_dir, s_record);
      serve_blocking(session, s_port, s_address, {}, [&](const ServeSession& s) {
        if (record.empty() || s.recorded().routes.size() == written) return;
        written = s.recorded().routes.size();
        write_dataset(s.recorded(), record);
      });
      if (!s_trace.empty()) {
        std::ofstream os(s_trace, std::ios::binary);
        if (!os) throw IoError("cannot write '" + s_trace + "'");
        write_trace(session.trace(), os);
      }
      return 0;
    }

    if (*corpus) {
      std::map<std::string, std::string> expected;
      const fs::path tsv = fs::path(p_dir) / "expected.tsv";
      if (fs::exists(tsv)) {
        std::istringstream is(read_text(tsv.string()));
        std::string line;
        while (std::getline(is, line)) {
          if (line.empty() || line[0] == '#') continue;
          const auto tab = line.find('\t');
          if (tab == std::string::npos) throw IoError("expected.tsv line without a tab: " + line);
          expected[line.substr(0, tab)] = line.substr(tab + 1);
        }
      }
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      int mismatches = 0;
      for (const auto& f : files) {
        const auto verdict = parse_instruction(read_text(f.string()));
        const std::string got = verdict ? std::string(to_string(*verdict)) : "UNPARSEABLE";
        const std::string name = f.filename().string();
        std::cout << name << '\t' << got;
        if (auto it = expected.find(name); it != expected.end()) {
          const bool ok = it->second == got;
          mismatches += ok ? 0 : 1;
          std::cout << '\t' << (ok ? "ok" : "MISMATCH (expected " + it->second + ")");
        }
        std::cout << '\n';
      }
      for (const auto& [name, _] : expected) {
        if (std::none_of(files.begin(), files.end(), [&](const fs::path& f) { return f.filename() == name; })) {
          std::cout << name << "\tMISSING\n";
          ++mismatches;
        }
      }
      if (mismatches > 0) {
        std::cerr << mismatches << " corpus entries did not match\n";
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
