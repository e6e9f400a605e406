#include "sfd/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "sfd/error.hpp"
#include "sfd/kernels.hpp"

namespace sfd {

namespace {

constexpr double kProbabilityFloor = 1e-12;
constexpr std::size_t kShardSize = 8;

void check_sample(const Sample& s) {
  if (s.y_c < 0 || s.y_c >= kInstructionCount) throw InvalidInput("route class out of range");
  if (!(s.y_s >= -1.0 && s.y_s <= 1.0) || !(s.y_t >= 0.0 && s.y_t <= 1.0)) {
    throw InvalidInput("action label out of range");
  }
}

}  // namespace

Sample mirrored(const Sample& s) {
  Sample m;
  m.obs = mirror(s.obs);
  m.y_s = -s.y_s;
  m.y_t = s.y_t;
  m.y_c = kInstructionCount - 1 - s.y_c;
  return m;
}

void DemoDataset::append_route(std::vector<Sample> route, Instruction label) {
  RouteSpan span{samples.size(), route.size(), label};
  for (auto& s : route) {
    s.y_c = index_of(label);
    samples.push_back(std::move(s));
  }
  routes.push_back(span);
}

void DemoDataset::validate() const {
  std::size_t expected = 0;
  for (const auto& r : routes) {
    if (r.start != expected) throw InvalidInput("routes do not partition the samples");
    for (std::size_t i = r.start; i < r.start + r.length; ++i) {
      if (i >= samples.size()) throw InvalidInput("route runs past the sample list");
      if (samples[i].y_c != index_of(r.label)) throw InvalidInput("sample class disagrees with its route");
    }
    expected += r.length;
  }
  if (expected != samples.size()) throw InvalidInput("routes do not cover every sample");
  for (const auto& s : samples) {
    check_sample(s);
  }
}

void TrainConfig::validate() const {
  if (!(k >= 0.0)) throw InvalidInput("k must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (batch_size <= 0) throw InvalidInput("batch size must be positive");
  if (epochs <= 0) throw InvalidInput("epochs must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must be in [0, 1)");
}

LossTerms loss_terms(const PolicyOutput& out, const Sample& sample, double k) {
  check_sample(sample);
  const auto c = static_cast<std::size_t>(sample.y_c);
  LossTerms t;
  const double es = out.V[c][0] - sample.y_s;
  const double et = out.V[c][1] - sample.y_t;
  t.action = es * es + et * et;
  t.ce = -std::log(std::max(out.p[c], kProbabilityFloor));
  t.total = t.action + k * t.ce;
  return t;
}

double loss(const PolicyOutput& out, const Sample& sample, double k) {
  return loss_terms(out, sample, k).total;
}

ParamGradients ParamGradients::zeros_like(const PolicyNet& net) {
  ParamGradients g;
  for (const auto& t : net.params()) g.tensors.emplace_back(t.size(), 0.0);
  return g;
}

namespace {

// Accumulate d(loss)/d(params) for one sample into g. Returns the loss.
double backprop_sample(const PolicyNet& net, const Sample& sample, double k, ForwardTrace& tr,
                       std::vector<std::vector<double>>& g, std::vector<double>& upstream,
                       std::vector<double>& dcols) {
  const PolicyOutput out = forward(net, sample.obs, tr);
  const double sample_loss = loss(out, sample, k);
  const auto c = static_cast<std::size_t>(sample.y_c);
  const auto& params = net.params();

  std::array<double, 6> dz{};
  {
    const double v0 = out.V[c][0];
    const double v1 = out.V[c][1];
    dz[2 * c] = 2.0 * (v0 - sample.y_s) * (1.0 - v0 * v0);
    dz[2 * c + 1] = 2.0 * (v1 - sample.y_t) * v1 * (1.0 - v1);
  }
  std::array<double, 3> dl{};
  for (std::size_t j = 0; j < 3; ++j) dl[j] = k * (out.p[j] - (j == c ? 1.0 : 0.0));

  const auto& h = tr.inputs.back();
  const std::size_t features = h.size();
  upstream.assign(features, 0.0);
  auto head = [&](std::size_t index, const double* delta, std::size_t rows) {
    auto& gW = g[index];
    auto& gb = g[index + 1];
    const auto& W = params[index].values;
    for (std::size_t j = 0; j < rows; ++j) {
      if (delta[j] == 0.0) continue;
      kernels::axpy(delta[j], h.data(), gW.data() + j * features, features);
      gb[j] += delta[j];
      kernels::axpy(delta[j], W.data() + j * features, upstream.data(), features);
    }
  };
  head(net.value_head_index(), dz.data(), 6);
  head(net.class_head_index(), dl.data(), 3);

  const auto& shapes = net.shapes();
  for (std::size_t li = shapes.size(); li-- > 0;) {
    const auto& s = shapes[li];
    const auto& pre = tr.pre[li];
    std::vector<double> dpre(upstream.size());
    for (std::size_t i = 0; i < dpre.size(); ++i) {
      dpre[i] = (!s.spec.relu || pre[i] > 0.0) ? upstream[i] : 0.0;
    }
    const auto& W = params[2 * li].values;
    auto& gW = g[2 * li];
    auto& gb = g[2 * li + 1];
    const std::size_t fan = s.fan_in();
    const bool need_input_grad = li > 0;
    std::vector<double> dinput;
    if (need_input_grad) dinput.assign(s.in_size(), 0.0);

    if (s.spec.kind == LayerSpec::Kind::dense) {
      const auto& x = tr.inputs[li];
      for (int o = 0; o < s.out_c; ++o) {
        const double d = dpre[static_cast<std::size_t>(o)];
        if (d == 0.0) continue;
        kernels::axpy(d, x.data(), gW.data() + static_cast<std::size_t>(o) * fan, fan);
        gb[static_cast<std::size_t>(o)] += d;
        if (need_input_grad) {
          kernels::axpy(d, W.data() + static_cast<std::size_t>(o) * fan, dinput.data(), fan);
        }
      }
    } else {
      const auto& cols = tr.cols[li];
      const std::size_t positions = static_cast<std::size_t>(s.out_h) * s.out_w;
      if (need_input_grad) dcols.assign(positions * fan, 0.0);
      for (int co = 0; co < s.out_c; ++co) {
        const double* w = W.data() + static_cast<std::size_t>(co) * fan;
        double* gw = gW.data() + static_cast<std::size_t>(co) * fan;
        const double* d = dpre.data() + static_cast<std::size_t>(co) * positions;
        double bias_sum = 0.0;
        for (std::size_t p = 0; p < positions; ++p) {
          if (d[p] == 0.0) continue;
          bias_sum += d[p];
          kernels::axpy(d[p], cols.data() + p * fan, gw, fan);
          if (need_input_grad) kernels::axpy(d[p], w, dcols.data() + p * fan, fan);
        }
        gb[static_cast<std::size_t>(co)] += bias_sum;
      }
      if (need_input_grad) {
        // col2im
        const int kk = s.spec.kernel;
        const int stride = s.spec.stride;
        const double* src = dcols.data();
        for (int oy = 0; oy < s.out_h; ++oy) {
          for (int ox = 0; ox < s.out_w; ++ox) {
            for (int ci = 0; ci < s.in_c; ++ci) {
              double* plane = dinput.data() + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
              for (int ky = 0; ky < kk; ++ky) {
                double* row = plane + static_cast<std::size_t>(oy * stride + ky) * s.in_w + ox * stride;
                for (int kx = 0; kx < kk; ++kx) row[kx] += *src++;
              }
            }
          }
        }
      }
    }
    upstream = std::move(dinput);
  }
  return sample_loss;
}

struct ShardResult {
  std::vector<std::vector<double>> g;
  double loss_sum = 0.0;
};

ShardResult run_shard(const PolicyNet& net, std::span<const Sample> shard, double k) {
  ShardResult r;
  for (const auto& t : net.params()) r.g.emplace_back(t.size(), 0.0);
  ForwardTrace tr;
  std::vector<double> upstream, dcols;
  for (const auto& s : shard) r.loss_sum += backprop_sample(net, s, k, tr, r.g, upstream, dcols);
  return r;
}

}  // namespace

ParamGradients grad(const PolicyNet& net, std::span<const Sample> batch, double k, int threads) {
  if (batch.empty()) throw InvalidInput("gradient of an empty batch");
  const std::size_t shard_count = (batch.size() + kShardSize - 1) / kShardSize;
  std::vector<ShardResult> shards(shard_count);
  auto work = [&](std::size_t first, std::size_t step) {
    for (std::size_t i = first; i < shard_count; i += step) {
      const std::size_t lo = i * kShardSize;
      const std::size_t n = std::min(kShardSize, batch.size() - lo);
      shards[i] = run_shard(net, batch.subspan(lo, n), k);
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, static_cast<int>(shard_count)));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  ParamGradients out = ParamGradients::zeros_like(net);
  double loss_sum = 0.0;
  for (const auto& s : shards) {
    for (std::size_t t = 0; t < out.tensors.size(); ++t) {
      kernels::axpy(1.0, s.g[t].data(), out.tensors[t].data(), out.tensors[t].size());
    }
    loss_sum += s.loss_sum;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& t : out.tensors) kernels::scale(inv, t.data(), t.size());
  out.mean_loss = loss_sum * inv;
  return out;
}

TrainResult train(PolicyNet net, const DemoDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch, int threads) {
  cfg.validate();
  if (data.samples.empty()) throw InvalidInput("cannot train on an empty dataset");

  Rng rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<double>> velocity;
  for (const auto& t : net.params()) velocity.emplace_back(t.size(), 0.0);
  const int decay_epoch = static_cast<int>(std::lround(cfg.decay_at * cfg.epochs));

  TrainResult result{net, {}};
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch >= decay_epoch ? cfg.learning_rate * cfg.decay_factor : cfg.learning_rate;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = lo; i < hi; ++i) {
        const Sample& s = data.samples[order[i]];
        if (cfg.mirror && coin(rng)) {
          batch.push_back(mirrored(s));
        } else {
          batch.push_back(s);
        }
      }
      ParamGradients g = grad(result.net, batch, cfg.k, threads);
      if (!std::isfinite(g.mean_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch starting at " << lo
            << " (lr " << lr << ", k " << cfg.k << ")";
        throw TrainingError(msg.str());
      }
      loss_sum += g.mean_loss * static_cast<double>(hi - lo);
      auto& params = result.net.params();
      for (std::size_t t = 0; t < params.size(); ++t) {
        auto& v = velocity[t];
        auto& w = params[t].values;
        const auto& gt = g.tensors[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] + gt[i];
          w[i] -= lr * v[i];
        }
      }
      result.net.snap_to_float();
    }
    const double mean = loss_sum / static_cast<double>(order.size());
    result.loss_curve.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace sfd
