#pragma once

// The fast controller: a small convolutional network with two heads.
//
//   value head  -> V, 3x2: one (steering, throttle) row per instruction
//   class head  -> p, probability over the three instructions
//
// The planner's instruction picks the V row to execute; without a planner
// the instruction is sampled from p.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sfd/sensor.hpp"
#include "sfd/world.hpp"

namespace sfd {

enum class Instruction : int { left = 0, middle = 1, right = 2 };

inline constexpr int kInstructionCount = 3;

std::string_view to_string(Instruction instr);
/// Case-insensitive; STRAIGHT is read as MIDDLE.
std::optional<Instruction> instruction_from_string(std::string_view text);
inline int index_of(Instruction i) { return static_cast<int>(i); }
Instruction instruction_at(int index);

/// Seeded generator shared by every stochastic component.
using Rng = std::mt19937_64;

struct LayerSpec {
  enum class Kind { conv, dense };
  Kind kind = Kind::dense;
  int out = 0;       // channels (conv) or units (dense)
  int kernel = 1;    // conv only
  int stride = 1;    // conv only
  bool relu = true;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetConfig {
  int input_width = 96;
  int input_height = 48;
  /// Convolution layers must precede dense layers.
  std::vector<LayerSpec> trunk;

  /// conv(8, 5x5, /2) -> conv(16, 5x5, /2) -> dense 64.
  static NetConfig standard(int width = 96, int height = 48);

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Geometry of one trunk layer after shape inference.
struct LayerShape {
  LayerSpec spec;
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;

  std::size_t in_size() const { return static_cast<std::size_t>(in_c) * in_h * in_w; }
  std::size_t out_size() const { return static_cast<std::size_t>(out_c) * out_h * out_w; }
  /// Length of one im2col patch (conv) or the input (dense).
  std::size_t fan_in() const;
};

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

struct PolicyOutput {
  std::array<std::array<double, 2>, 3> V{};  // [instruction][steering, throttle]
  std::array<double, 3> p{};

  friend bool operator==(const PolicyOutput&, const PolicyOutput&) = default;
};

/// Parameters live on the float32 grid so checkpoints round-trip exactly;
/// arithmetic runs in double.
class PolicyNet {
 public:
  PolicyNet(NetConfig config, std::uint64_t seed);

  const NetConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<LayerShape>& shapes() const { return shapes_; }
  std::size_t trunk_output_size() const;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t parameter_count() const;

  /// Index of the first head tensor; value head W, b then class head W, b.
  std::size_t value_head_index() const { return 2 * shapes_.size(); }
  std::size_t class_head_index() const { return 2 * shapes_.size() + 2; }

  void zero_heads();
  void snap_to_float();

  /// Build an empty network with the given tensors (used by checkpoint loading).
  static PolicyNet from_tensors(NetConfig config, std::uint64_t seed, std::vector<Tensor> params);

 private:
  PolicyNet() = default;
  void infer_shapes();

  NetConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<LayerShape> shapes_;
  std::vector<Tensor> params_;
};

/// Intermediate values kept for backpropagation.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;  // input of each trunk layer, then trunk output
  std::vector<std::vector<double>> pre;     // pre-activation output of each trunk layer
  std::vector<std::vector<double>> cols;    // im2col matrix per conv layer
  std::array<double, 6> value_pre{};
  std::array<double, 3> logits{};
  PolicyOutput out;
};

std::array<double, 3> softmax(const std::array<double, 3>& logits);

/// Throws ShapeError when the observation does not match the input size.
PolicyOutput forward(const PolicyNet& net, const Observation& obs);
PolicyOutput forward(const PolicyNet& net, const Observation& obs, ForwardTrace& trace);

/// Execute the V row selected by the instruction.
Action act(const PolicyOutput& out, Instruction instr);

/// Sample an instruction from p.
Instruction self_instruct(const PolicyOutput& out, Rng& rng);

/// Index of the largest probability; ties go to the lowest index.
Instruction most_likely(const PolicyOutput& out);

// Checkpoint container: "SFD1", u32 little-endian header length, JSON
// header, then each tensor as little-endian float32 in header order.
std::string encode_checkpoint(const PolicyNet& net);
PolicyNet decode_checkpoint(const std::string& bytes);
void save_checkpoint(const PolicyNet& net, const std::string& path);
PolicyNet load_checkpoint(const std::string& path);

}  // namespace sfd
