#pragma once

// Imitation learning: demonstrations, the two-head loss, backprop and SGD.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sfd/policy.hpp"
#include "sfd/sensor.hpp"
#include "sfd/world.hpp"

namespace sfd {

struct Sample {
  Observation obs;
  double y_s = 0.0;  // steering label, [-1, 1]
  double y_t = 0.0;  // throttle label, [0, 1]
  int y_c = 1;       // route class: 0 LEFT, 1 MIDDLE, 2 RIGHT
};

/// The same sample seen in a mirror.
Sample mirrored(const Sample& s);

struct RouteSpan {
  std::size_t start = 0;
  std::size_t length = 0;
  Instruction label = Instruction::middle;
};

struct DemoDataset {
  std::vector<Sample> samples;
  std::vector<RouteSpan> routes;

  /// Append a route; every sample gets the route's class.
  void append_route(std::vector<Sample> route, Instruction label);
  /// Routes must partition the samples and agree with each sample's class.
  void validate() const;
};

struct TrainConfig {
  double k = 1.0;  // weight of the cross-entropy term
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  double decay_at = 0.8;  // fraction of epochs after which lr is scaled
  double decay_factor = 0.1;
  // Each epoch flips every sample left-right with probability 1/2 (image
  // mirrored, steering negated, LEFT and RIGHT swapped). Off by default.
  bool mirror = false;

  void validate() const;
};

struct LossTerms {
  double action = 0.0;  // squared error on the labelled V row
  double ce = 0.0;      // -log p[y_c], clamped at 1e-12
  double total = 0.0;   // action + k * ce
};

LossTerms loss_terms(const PolicyOutput& out, const Sample& sample, double k);
double loss(const PolicyOutput& out, const Sample& sample, double k);

/// One gradient tensor per network parameter tensor, same shapes.
struct ParamGradients {
  std::vector<std::vector<double>> tensors;
  double mean_loss = 0.0;

  static ParamGradients zeros_like(const PolicyNet& net);
};

/// Mean gradient of the loss over the batch. Samples are accumulated in
/// fixed-size shards summed in order, so the result does not depend on
/// `threads`.
ParamGradients grad(const PolicyNet& net, std::span<const Sample> batch, double k,
                    int threads = 1);

struct TrainResult {
  PolicyNet net;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Seeded shuffled mini-batch SGD with momentum. Throws TrainingError on a
/// non-finite loss.
TrainResult train(PolicyNet net, const DemoDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}, int threads = 1);

/// Drives the vehicle while demonstrations are recorded.
class ExpertDriver {
 public:
  virtual ~ExpertDriver() = default;
  virtual Action drive(const VehicleState& state, const Scenario& scenario, double t,
                       Instruction route) = 0;
};

/// Pure pursuit toward a lateral offset on the commanded side of each
/// obstacle, returning to the centreline once past it.
class ScriptedExpert final : public ExpertDriver {
 public:
  struct Params {
    double offset = 0.5;          // lateral target beside the obstacle
    double lookahead = 0.8;       // pure-pursuit lookahead distance
    double ramp_start = 2.2;      // start moving aside this far before
    double ramp_end = 0.5;        // fully aside this far before
    double hold_after = 0.3;      // stay aside this far past
    double return_length = 1.7;   // back on the centreline after this
    double throttle = kCruiseThrottle;
  };

  ScriptedExpert() = default;
  explicit ScriptedExpert(Params p) : params_(p) {}

  Action drive(const VehicleState& state, const Scenario& scenario, double t,
               Instruction route) override;

  /// Lateral reference at longitudinal position x.
  double reference_y(const Scenario& scenario, double x, Instruction route) const;

  Params& params() { return params_; }
  const Params& params() const { return params_; }

 private:
  Params params_;
};

struct CollectConfig {
  int routes = 60;
  double fps = 20.0;   // record every third tick at dt = 1/60
  double dt = 1.0 / 60.0;
  std::uint64_t seed = 0;
  double lateral_jitter = 0.1;     // uniform +- metres at the start
  double heading_jitter_deg = 3.0; // uniform +- degrees at the start
  double offset_jitter = 0.05;     // per-route spread of the expert's offset
  // MIDDLE routes start further off-centre so they also show the recovery
  // back to the centreline.
  double middle_lateral_jitter = 0.5;
  double middle_heading_jitter_deg = 10.0;
  // Correlated steering noise added to the executed action while the label
  // keeps the expert's clean action, so routes include recoveries.
  double steering_noise = 0.25;    // stationary standard deviation
  double noise_correlation = 0.95; // per-tick AR(1) coefficient
  double tail = 1.0;               // keep driving this far past the goal
  int max_attempts = 20;           // re-rolls per route after a collision
  CameraSpec camera;
  VehicleParams vehicle;
};

/// Record expert routes: LEFT and RIGHT pass the obstacles on that side,
/// MIDDLE drives the same corridor with the obstacles removed. Classes are
/// split into equal thirds (remainder goes LEFT, then RIGHT).
DemoDataset collect_demos(const Scenario& scenario, ExpertDriver& driver, const CollectConfig& cfg);

/// JSON Lines, one sample per line; a ".gz" suffix selects gzip.
void write_dataset(const DemoDataset& data, const std::string& path);
DemoDataset read_dataset(const std::string& path);

/// One JSON Lines record (no trailing newline).
std::string sample_to_json_line(const Sample& s, std::size_t route, std::int64_t tick);

}  // namespace sfd
