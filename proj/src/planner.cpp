#include "sfd/planner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "sfd/error.hpp"

namespace sfd {

namespace {

// Obstacles within this many metres (along x) of the nearest one ahead are
// treated as one group.
constexpr double kGroupDepth = 1.0;

constexpr double kTickTolerance = 1e-9;

}  // namespace

GapAnalysis analyze_gaps(const VehicleState& state, const Scenario& scenario, double t,
                         double lookahead) {
  struct Disc {
    Vec2 c;
    double r;
  };
  std::vector<Disc> ahead;
  for (const auto& o : scenario.obstacles) {
    const Vec2 c = o.position_at(t);
    // an obstacle stays "ahead" until the vehicle centre is past its far edge
    const double dx = c.x - state.pose.x;
    if (dx + o.radius > 0.0 && dx <= lookahead) ahead.push_back({c, o.radius});
  }
  GapAnalysis g;
  if (ahead.empty()) return g;

  double nearest = ahead.front().c.x;
  for (const auto& d : ahead) nearest = std::min(nearest, d.c.x);
  g.obstacle_ahead = true;
  g.group_x = nearest;
  g.half_width = scenario.half_width_at(nearest);
  const double hw = g.half_width;

  std::vector<std::pair<double, double>> blocked;
  for (const auto& d : ahead) {
    if (d.c.x - nearest > kGroupDepth) continue;
    const double lo = std::max(-hw, d.c.y - d.r);
    const double hi = std::min(hw, d.c.y + d.r);
    if (lo < hi) blocked.emplace_back(lo, hi);
  }
  std::sort(blocked.begin(), blocked.end());

  double cursor = -hw;
  for (const auto& [lo, hi] : blocked) {
    if (lo > cursor) g.gaps.push_back({cursor, lo});
    cursor = std::max(cursor, hi);
  }
  if (cursor < hw) g.gaps.push_back({cursor, hw});
  return g;
}

Instruction lateral_third(double y, double half_width) {
  if (y < -half_width / 3.0) return Instruction::left;
  if (y > half_width / 3.0) return Instruction::right;
  return Instruction::middle;
}

Instruction oracle_plan(const VehicleState& state, const Scenario& scenario, double t,
                        double lookahead) {
  const GapAnalysis g = analyze_gaps(state, scenario, t, lookahead);
  if (!g.obstacle_ahead || g.gaps.empty()) return Instruction::middle;
  // gaps run left to right, so >= lets the right-hand one win a tie
  const LateralGap* best = &g.gaps.front();
  for (const auto& gap : g.gaps) {
    if (gap.width() >= best->width()) best = &gap;
  }
  return lateral_third(best->center(), g.half_width);
}

LatencyModel LatencyModel::fixed(double seconds) {
  LatencyModel m;
  m.kind = Kind::fixed;
  m.mean = seconds;
  m.validate();
  return m;
}

LatencyModel LatencyModel::gaussian(double mean, double stddev) {
  LatencyModel m;
  m.kind = Kind::gaussian;
  m.mean = mean;
  m.stddev = stddev;
  m.validate();
  return m;
}

void LatencyModel::validate() const {
  if (!std::isfinite(mean) || mean < 0.0) throw InvalidInput("latency mean must be >= 0");
  if (!std::isfinite(stddev) || stddev < 0.0) throw InvalidInput("latency stddev must be >= 0");
}

double LatencyModel::sample(Rng& rng) const {
  if (kind == Kind::fixed || stddev == 0.0) return mean;
  std::normal_distribution<double> dist(mean, stddev);
  for (;;) {
    const double v = dist(rng);
    if (v >= 0.0) return v;
  }
}

std::int64_t latency_ticks(double latency, double d) {
  if (!(d > 0.0)) throw InvalidInput("controller period must be positive");
  if (!(latency >= 0.0)) throw InvalidInput("latency must be non-negative");
  const double ticks = std::ceil(latency / d - kTickTolerance);
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(ticks));
}

std::string_view to_string(PromptStyle style) {
  return style == PromptStyle::cot ? "cot" : "naive";
}

PromptStyle prompt_style_from_string(std::string_view text) {
  if (text == "naive") return PromptStyle::naive;
  if (text == "cot") return PromptStyle::cot;
  throw InvalidInput("unknown prompt style '" + std::string(text) + "'");
}

std::string PromptBundle::full_text() const { return system_text + "\n" + question_text; }

PromptBundle build_prompt(PromptStyle style, const Observation& image) {
  PromptBundle b;
  b.style = style;
  b.image = image;
  if (style == PromptStyle::naive) {
    b.system_text = "The image shows a toy car drives through a hallway that might have obstacles.";
    b.question_text = "Please output the future direction of the car as LEFT, MIDDLE, or RIGHT.";
  } else {
    b.system_text = "A toy car drives through a hallway that might have obstacles.";
    b.question_text =
        "Please answer the following 5 questions step by step:\n"
        "1. Identify any obstacle in the image.\n"
        "2. Describe the position of the obstacles in the hallway.\n"
        "3. Describe the position of empty space between the obstacles and the hallway wall.\n"
        "4. Describe which empty space is larger.\n"
        "5. Output the direction of larger empty space as LEFT, MIDDLE, or RIGHT.";
  }
  return b;
}

namespace {

std::optional<Instruction> keyword(std::string_view word) {
  std::string up(word);
  for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (up == "LEFT") return Instruction::left;
  if (up == "RIGHT") return Instruction::right;
  if (up == "MIDDLE" || up == "STRAIGHT") return Instruction::middle;
  return std::nullopt;
}

// Last keyword on a line, matched as a whole word.
std::optional<Instruction> last_keyword(std::string_view line) {
  std::optional<Instruction> found;
  std::size_t i = 0;
  while (i < line.size()) {
    if (!std::isalnum(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && std::isalnum(static_cast<unsigned char>(line[j]))) ++j;
    if (auto k = keyword(line.substr(i, j - i))) found = k;
    i = j;
  }
  return found;
}

}  // namespace

std::optional<Instruction> parse_instruction(std::string_view response) {
  std::string text;
  text.reserve(response.size());
  for (char ch : response) {
    if (ch != '*' && ch != '_' && ch != '`') text.push_back(ch);
  }
  std::optional<Instruction> verdict;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (auto k = last_keyword(std::string_view(text).substr(start, end - start))) verdict = k;
    start = end + 1;
  }
  return verdict;
}

std::string_view to_string(PlannerKind kind) {
  switch (kind) {
    case PlannerKind::oracle: return "oracle";
    case PlannerKind::scripted: return "scripted";
    case PlannerKind::vlm: return "vlm";
  }
  return "?";
}

PlannerKind planner_kind_from_string(std::string_view text) {
  if (text == "oracle") return PlannerKind::oracle;
  if (text == "scripted") return PlannerKind::scripted;
  if (text == "vlm") return PlannerKind::vlm;
  throw InvalidInput("unknown planner '" + std::string(text) + "'");
}

OraclePlanner::OraclePlanner(LatencyModel latency, double lookahead)
    : PlannerBackend(latency), lookahead_(lookahead) {
  if (!(lookahead > 0.0)) throw InvalidInput("lookahead must be positive");
}

PlanAnswer OraclePlanner::plan(const PlanRequest& request) {
  const Instruction i = oracle_plan(request.state, request.scenario, request.t, lookahead_);
  return {i, std::string(to_string(i))};
}

ScriptedPlanner::ScriptedPlanner(LatencyModel latency, std::vector<Instruction> sequence)
    : PlannerBackend(latency), sequence_(std::move(sequence)) {
  if (sequence_.empty()) throw InvalidInput("scripted planner needs at least one instruction");
}

PlanAnswer ScriptedPlanner::plan(const PlanRequest&) {
  const Instruction i = sequence_[next_];
  if (next_ + 1 < sequence_.size()) ++next_;
  return {i, std::string(to_string(i))};
}

VlmPlanner::VlmPlanner(LatencyModel latency, EndpointConfig endpoint, PromptStyle style)
    : PlannerBackend(latency), endpoint_(std::move(endpoint)), style_(style) {
  endpoint_.validate();
}

PlanAnswer VlmPlanner::plan(const PlanRequest& request) {
  const PromptBundle bundle = build_prompt(style_, request.observation);
  VlmReply reply = vlm_request(bundle, endpoint_);
  return {parse_instruction(reply.raw), std::move(reply.raw)};
}

}  // namespace sfd
