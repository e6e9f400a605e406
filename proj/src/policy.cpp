#include "sfd/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "sfd/error.hpp"
#include "sfd/kernels.hpp"

namespace sfd {

std::string_view to_string(Instruction instr) {
  switch (instr) {
    case Instruction::left: return "LEFT";
    case Instruction::middle: return "MIDDLE";
    case Instruction::right: return "RIGHT";
  }
  return "MIDDLE";
}

std::optional<Instruction> instruction_from_string(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  if (up == "LEFT") return Instruction::left;
  if (up == "MIDDLE" || up == "STRAIGHT") return Instruction::middle;
  if (up == "RIGHT") return Instruction::right;
  return std::nullopt;
}

Instruction instruction_at(int index) {
  if (index < 0 || index >= kInstructionCount) throw InvalidInput("instruction index out of range");
  return static_cast<Instruction>(index);
}

NetConfig NetConfig::standard(int width, int height) {
  NetConfig c;
  c.input_width = width;
  c.input_height = height;
  c.trunk = {
      {LayerSpec::Kind::conv, 8, 5, 2, true},
      {LayerSpec::Kind::conv, 16, 5, 2, true},
      {LayerSpec::Kind::dense, 64, 1, 1, true},
  };
  return c;
}

std::size_t LayerShape::fan_in() const {
  if (spec.kind == LayerSpec::Kind::conv) {
    return static_cast<std::size_t>(in_c) * spec.kernel * spec.kernel;
  }
  return in_size();
}

PolicyNet::PolicyNet(NetConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  infer_shapes();
  Rng rng(seed);
  auto make = [&](std::string name, std::vector<int> shape, double stddev) {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    const auto n = std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1},
                                   [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    t.values.assign(n, 0.0);
    if (stddev > 0.0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& v : t.values) v = dist(rng);
    }
    params_.push_back(std::move(t));
  };
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    const auto& s = shapes_[i];
    const double he = std::sqrt(2.0 / static_cast<double>(s.fan_in()));
    const std::string prefix = "trunk" + std::to_string(i);
    if (s.spec.kind == LayerSpec::Kind::conv) {
      make(prefix + ".weight", {s.out_c, s.in_c, s.spec.kernel, s.spec.kernel}, he);
    } else {
      make(prefix + ".weight", {s.out_c, static_cast<int>(s.in_size())}, he);
    }
    make(prefix + ".bias", {s.out_c}, 0.0);
  }
  const int features = static_cast<int>(trunk_output_size());
  const double head_std = 0.1 / std::sqrt(static_cast<double>(features));
  make("value_head.weight", {6, features}, head_std);
  make("value_head.bias", {6}, 0.0);
  make("class_head.weight", {3, features}, head_std);
  make("class_head.bias", {3}, 0.0);
  snap_to_float();
}

PolicyNet PolicyNet::from_tensors(NetConfig config, std::uint64_t seed, std::vector<Tensor> params) {
  PolicyNet net;
  net.config_ = std::move(config);
  net.seed_ = seed;
  net.infer_shapes();
  PolicyNet reference(net.config_, seed);
  if (params.size() != reference.params_.size()) {
    throw ShapeError("tensor count does not match the network configuration");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape != reference.params_[i].shape ||
        params[i].values.size() != reference.params_[i].values.size()) {
      throw ShapeError("tensor '" + params[i].name + "' has the wrong shape");
    }
  }
  net.params_ = std::move(params);
  return net;
}

void PolicyNet::infer_shapes() {
  shapes_.clear();
  int c = 1, h = config_.input_height, w = config_.input_width;
  if (h <= 0 || w <= 0) throw ShapeError("input dimensions must be positive");
  bool seen_dense = false;
  for (const auto& spec : config_.trunk) {
    LayerShape s;
    s.spec = spec;
    s.in_c = c;
    s.in_h = h;
    s.in_w = w;
    if (spec.out <= 0) throw ShapeError("layer width must be positive");
    if (spec.kind == LayerSpec::Kind::conv) {
      if (seen_dense) throw ShapeError("convolution after dense layer");
      if (spec.kernel <= 0 || spec.stride <= 0 || spec.kernel > h || spec.kernel > w) {
        throw ShapeError("convolution kernel does not fit its input");
      }
      s.out_c = spec.out;
      s.out_h = (h - spec.kernel) / spec.stride + 1;
      s.out_w = (w - spec.kernel) / spec.stride + 1;
    } else {
      seen_dense = true;
      s.out_c = spec.out;
      s.out_h = 1;
      s.out_w = 1;
    }
    c = s.out_c;
    h = s.out_h;
    w = s.out_w;
    shapes_.push_back(s);
  }
}

std::size_t PolicyNet::trunk_output_size() const {
  if (shapes_.empty()) {
    return static_cast<std::size_t>(config_.input_width) * config_.input_height;
  }
  return shapes_.back().out_size();
}

std::size_t PolicyNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.size();
  return n;
}

void PolicyNet::zero_heads() {
  for (std::size_t i = value_head_index(); i < params_.size(); ++i) {
    std::fill(params_[i].values.begin(), params_[i].values.end(), 0.0);
  }
}

void PolicyNet::snap_to_float() {
  for (auto& t : params_) {
    for (auto& v : t.values) v = static_cast<double>(static_cast<float>(v));
  }
}

std::array<double, 3> softmax(const std::array<double, 3>& logits) {
  const double m = std::max({logits[0], logits[1], logits[2]});
  std::array<double, 3> e{std::exp(logits[0] - m), std::exp(logits[1] - m), std::exp(logits[2] - m)};
  const double z = e[0] + e[1] + e[2];
  return {e[0] / z, e[1] / z, e[2] / z};
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void im2col(const LayerShape& s, const std::vector<double>& in, std::vector<double>& cols) {
  const int k = s.spec.kernel;
  const int stride = s.spec.stride;
  const std::size_t patch = s.fan_in();
  cols.resize(static_cast<std::size_t>(s.out_h) * s.out_w * patch);
  double* dst = cols.data();
  for (int oy = 0; oy < s.out_h; ++oy) {
    for (int ox = 0; ox < s.out_w; ++ox) {
      for (int c = 0; c < s.in_c; ++c) {
        const double* plane = in.data() + static_cast<std::size_t>(c) * s.in_h * s.in_w;
        for (int ky = 0; ky < k; ++ky) {
          const double* row = plane + static_cast<std::size_t>(oy * stride + ky) * s.in_w + ox * stride;
          for (int kx = 0; kx < k; ++kx) *dst++ = row[kx];
        }
      }
    }
  }
}

}  // namespace

PolicyOutput forward(const PolicyNet& net, const Observation& obs, ForwardTrace& trace) {
  const auto& cfg = net.config();
  if (obs.width != cfg.input_width || obs.height != cfg.input_height ||
      obs.pixels.size() != static_cast<std::size_t>(obs.width) * obs.height) {
    throw ShapeError("observation is " + std::to_string(obs.width) + "x" +
                     std::to_string(obs.height) + ", network expects " +
                     std::to_string(cfg.input_width) + "x" + std::to_string(cfg.input_height));
  }
  const auto& shapes = net.shapes();
  const auto& params = net.params();
  trace.inputs.resize(shapes.size() + 1);
  trace.pre.resize(shapes.size());
  trace.cols.resize(shapes.size());
  trace.inputs[0].assign(obs.pixels.begin(), obs.pixels.end());

  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const auto& s = shapes[li];
    const auto& W = params[2 * li].values;
    const auto& b = params[2 * li + 1].values;
    auto& pre = trace.pre[li];
    pre.assign(s.out_size(), 0.0);
    const std::size_t fan = s.fan_in();
    if (s.spec.kind == LayerSpec::Kind::conv) {
      auto& cols = trace.cols[li];
      im2col(s, trace.inputs[li], cols);
      const std::size_t positions = static_cast<std::size_t>(s.out_h) * s.out_w;
      for (int co = 0; co < s.out_c; ++co) {
        const double* w = W.data() + static_cast<std::size_t>(co) * fan;
        double* out = pre.data() + static_cast<std::size_t>(co) * positions;
        for (std::size_t p = 0; p < positions; ++p) {
          out[p] = b[static_cast<std::size_t>(co)] + kernels::dot(w, cols.data() + p * fan, fan);
        }
      }
    } else {
      trace.cols[li].clear();
      const auto& x = trace.inputs[li];
      for (int o = 0; o < s.out_c; ++o) {
        pre[static_cast<std::size_t>(o)] =
            b[static_cast<std::size_t>(o)] +
            kernels::dot(W.data() + static_cast<std::size_t>(o) * fan, x.data(), fan);
      }
    }
    auto& next = trace.inputs[li + 1];
    next = pre;
    if (s.spec.relu) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    }
  }

  const auto& h = trace.inputs.back();
  const std::size_t features = h.size();
  const auto& Wv = params[net.value_head_index()].values;
  const auto& bv = params[net.value_head_index() + 1].values;
  const auto& Wc = params[net.class_head_index()].values;
  const auto& bc = params[net.class_head_index() + 1].values;
  for (std::size_t j = 0; j < 6; ++j) {
    trace.value_pre[j] = bv[j] + kernels::dot(Wv.data() + j * features, h.data(), features);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    trace.logits[j] = bc[j] + kernels::dot(Wc.data() + j * features, h.data(), features);
  }
  PolicyOutput out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.V[i][0] = std::tanh(trace.value_pre[2 * i]);
    out.V[i][1] = sigmoid(trace.value_pre[2 * i + 1]);
  }
  out.p = softmax(trace.logits);
  trace.out = out;
  return out;
}

PolicyOutput forward(const PolicyNet& net, const Observation& obs) {
  thread_local ForwardTrace trace;
  return forward(net, obs, trace);
}

Action act(const PolicyOutput& out, Instruction instr) {
  const auto& row = out.V[static_cast<std::size_t>(index_of(instr))];
  return {std::clamp(row[0], -1.0, 1.0), std::clamp(row[1], 0.0, 1.0)};
}

Instruction self_instruct(const PolicyOutput& out, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  for (int i = 0; i < kInstructionCount; ++i) {
    cumulative += out.p[static_cast<std::size_t>(i)];
    if (u < cumulative) return instruction_at(i);
  }
  // u landed in the rounding slack above the last cumulative sum
  for (int i = kInstructionCount - 1; i >= 0; --i) {
    if (out.p[static_cast<std::size_t>(i)] > 0.0) return instruction_at(i);
  }
  return Instruction::middle;
}

Instruction most_likely(const PolicyOutput& out) {
  int best = 0;
  for (int i = 1; i < kInstructionCount; ++i) {
    if (out.p[static_cast<std::size_t>(i)] > out.p[static_cast<std::size_t>(best)]) best = i;
  }
  return instruction_at(best);
}

}  // namespace sfd
