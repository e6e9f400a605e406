#include "sfd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "sfd/error.hpp"
#include "sfd/store.hpp"

namespace sfd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("bad number '" + s + "' in report CSV");
  }
  return v;
}

const char* const kCsvHeader =
    "scenario,source,backend,latency_mean_s,trials,successes,success_rate,mean_ticks";

LatencyModel latency_from_json(const nlohmann::json& j) {
  if (j.is_number()) return LatencyModel::fixed(j.get<double>());
  const auto kind = j.value("kind", std::string("fixed"));
  if (kind == "fixed") return LatencyModel::fixed(j.at("mean").get<double>());
  if (kind == "gaussian") return LatencyModel::gaussian(j.at("mean").get<double>(), j.at("stddev").get<double>());
  throw ConfigError("unknown latency kind '" + kind + "'");
}

}  // namespace

std::string ModelSetup::backend_label() const {
  if (source.kind != InstructionSource::Kind::planner) return "none";
  return std::string(to_string(backend));
}

void EvalPlan::validate() const {
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  if (!(lateral_jitter >= 0.0) || !(heading_jitter_deg >= 0.0)) throw InvalidInput("jitter must be >= 0");
  if (!(d > 0.0)) throw InvalidInput("d must be positive");
  for (const auto& m : models) {
    m.latency.validate();
    if (m.source.kind == InstructionSource::Kind::planner && m.backend == PlannerKind::vlm) {
      throw InvalidInput("evaluation runs in virtual time; the vlm backend is not supported here");
    }
    if (m.backend == PlannerKind::scripted && m.script.empty()) {
      throw InvalidInput("scripted backend needs a script");
    }
  }
  camera.validate();
}

EvalPlan eval_plan_from_json(const std::string& text) {
  using nlohmann::json;
  EvalPlan plan;
  try {
    const json j = json::parse(text);
    for (const auto& [key, _] : j.items()) {
      static const std::vector<std::string> known = {"scenarios", "models", "trials", "seed",
                                                     "lateral_jitter", "heading_jitter_deg", "d",
                                                     "max_ticks"};
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError("unknown key '" + key + "' in eval plan");
      }
    }
    plan.scenarios = j.at("scenarios").get<std::vector<std::string>>();
    for (const auto& mj : j.at("models")) {
      ModelSetup m;
      m.source = instruction_source_from_string(mj.value("source", std::string("planner")));
      m.backend = planner_kind_from_string(mj.value("backend", std::string("oracle")));
      if (mj.contains("latency")) m.latency = latency_from_json(mj.at("latency"));
      m.lookahead = mj.value("lookahead", kDefaultLookahead);
      if (mj.contains("script")) {
        for (const auto& s : mj.at("script")) {
          auto i = instruction_from_string(s.get<std::string>());
          if (!i) throw ConfigError("bad instruction in script");
          m.script.push_back(*i);
        }
      }
      plan.models.push_back(std::move(m));
    }
    plan.trials = j.value("trials", plan.trials);
    plan.seed_base = j.value("seed", plan.seed_base);
    plan.lateral_jitter = j.value("lateral_jitter", plan.lateral_jitter);
    plan.heading_jitter_deg = j.value("heading_jitter_deg", plan.heading_jitter_deg);
    plan.d = j.value("d", plan.d);
    plan.max_ticks = j.value("max_ticks", plan.max_ticks);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad eval plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t cell, std::uint64_t trial) {
  return splitmix64(splitmix64(splitmix64(base) ^ cell) ^ trial);
}

Scenario jittered(const Scenario& scenario, const EvalPlan& plan, std::uint64_t seed) {
  Scenario s = scenario;
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  s.start.pose.y += plan.lateral_jitter * unit(rng);
  s.start.pose.heading += plan.heading_jitter_deg * kPi / 180.0 * unit(rng);
  return s;
}

std::shared_ptr<PlannerBackend> make_planner(const ModelSetup& model) {
  if (model.source.kind != InstructionSource::Kind::planner) return nullptr;
  switch (model.backend) {
    case PlannerKind::oracle: return std::make_shared<OraclePlanner>(model.latency, model.lookahead);
    case PlannerKind::scripted: return std::make_shared<ScriptedPlanner>(model.latency, model.script);
    case PlannerKind::vlm: break;
  }
  throw InvalidInput("the vlm backend needs an endpoint");
}

SuccessReport run_eval(const EvalPlan& plan, const PolicyNet& net, const TrialCallback& on_trial) {
  plan.validate();
  SuccessReport report;
  std::size_t cell_index = 0;
  for (const auto& name : plan.scenarios) {
    const Scenario scenario = load_scenario(name);
    for (const auto& model : plan.models) {
      CellReport cell;
      cell.scenario = scenario.name;
      cell.source = to_string(model.source);
      cell.backend = model.backend_label();
      cell.latency_mean_s = model.source.kind == InstructionSource::Kind::planner ? model.latency.mean : 0.0;
      cell.trials = plan.trials;
      for (const auto t : {Termination::goal, Termination::collision_wall,
                           Termination::collision_obstacle, Termination::timeout}) {
        cell.terminations[std::string(to_string(t))] = 0;
      }
      double tick_sum = 0.0;
      for (int trial = 0; trial < plan.trials; ++trial) {
        const std::uint64_t seed = trial_seed(plan.seed_base, cell_index, static_cast<std::uint64_t>(trial));
        LoopConfig cfg;
        cfg.d = plan.d;
        cfg.planner = make_planner(model);
        cfg.source = model.source;
        cfg.max_ticks = plan.max_ticks;
        cfg.seed = seed;
        cfg.camera = plan.camera;
        const EpisodeResult r = run_episode(jittered(scenario, plan, seed), net, cfg);
        cell.successes += r.success ? 1 : 0;
        cell.terminations[std::string(to_string(r.termination))] += 1;
        tick_sum += static_cast<double>(r.ticks_run);
        if (on_trial) on_trial(cell_index, trial, r);
      }
      cell.success_rate = static_cast<double>(cell.successes) / static_cast<double>(cell.trials);
      cell.mean_ticks = tick_sum / static_cast<double>(cell.trials);
      report.cells.push_back(std::move(cell));
      ++cell_index;
    }
  }
  return report;
}

std::string format_percent(double rate) {
  return std::to_string(static_cast<long>(std::lround(rate * 100.0))) + "%";
}

std::string emit_report(const SuccessReport& report, ReportFormat format) {
  std::ostringstream os;
  if (format == ReportFormat::csv) {
    os << kCsvHeader << '\n';
    for (const auto& c : report.cells) {
      os << c.scenario << ',' << c.source << ',' << c.backend << ',' << shortest(c.latency_mean_s) << ','
         << c.trials << ',' << c.successes << ',' << shortest(c.success_rate) << ','
         << shortest(c.mean_ticks) << '\n';
    }
    return os.str();
  }

  // Rows are models, columns are scenarios, cells are success percentages.
  std::vector<std::string> scenarios;
  std::vector<std::string> models;
  auto model_label = [](const CellReport& c) {
    std::string label = c.source;
    if (c.backend != "none") label += " / " + c.backend + " @ " + shortest(c.latency_mean_s) + " s";
    return label;
  };
  for (const auto& c : report.cells) {
    if (std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end()) scenarios.push_back(c.scenario);
    const auto label = model_label(c);
    if (std::find(models.begin(), models.end(), label) == models.end()) models.push_back(label);
  }
  os << "| Model |";
  for (const auto& s : scenarios) os << ' ' << s << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < scenarios.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& m : models) {
    os << "| " << m << " |";
    for (const auto& s : scenarios) {
      std::string value = "-";
      for (const auto& c : report.cells) {
        if (c.scenario == s && model_label(c) == m) value = format_percent(c.success_rate);
      }
      os << ' ' << value << " |";
    }
    os << '\n';
  }
  return os.str();
}

SuccessReport parse_report_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw IoError("report CSV has an unexpected header");
  SuccessReport report;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 8) throw IoError("report CSV row has " + std::to_string(f.size()) + " fields");
    CellReport c;
    c.scenario = f[0];
    c.source = f[1];
    c.backend = f[2];
    c.latency_mean_s = parse_double(f[3]);
    c.trials = std::stoi(f[4]);
    c.successes = std::stoi(f[5]);
    c.success_rate = parse_double(f[6]);
    c.mean_ticks = parse_double(f[7]);
    report.cells.push_back(std::move(c));
  }
  return report;
}

}  // namespace sfd
