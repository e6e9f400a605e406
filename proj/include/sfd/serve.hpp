#pragma once

// Live simulator service for the teleop / monitoring UI.
//
// ServeSession is the transport-free core (message handling, ticking,
// route recording); WsServer puts it behind a WebSocket at /ws.

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfd/learn.hpp"
#include "sfd/loop.hpp"

namespace sfd {

enum class WsType {
  // client -> server
  hello,
  control,
  set_mode,
  start_episode,
  stop,
  mark_route,
  // server -> client
  state,
  frame,
  instruction,
  episode_end,
  error,
};

std::string_view to_string(WsType type);
WsType ws_type_from_string(std::string_view text);

/// One JSON text frame: {"type": ..., "seq": n, ...fields}.
struct WsMessage {
  WsType type = WsType::hello;
  std::uint64_t seq = 0;
  nlohmann::json body = nlohmann::json::object();  // everything except type and seq
};

std::string encode_ws(const WsMessage& msg);
/// Throws InvalidInput on malformed JSON, unknown types or missing fields.
WsMessage decode_ws(const std::string& text);

enum class ServeMode { teleop, watch };
std::string_view to_string(ServeMode mode);
ServeMode serve_mode_from_string(std::string_view text);

struct ServeConfig {
  Scenario scenario;
  ServeMode mode = ServeMode::teleop;
  double d = 1.0 / 60.0;
  int frame_every = 4;  // send a frame on every n-th tick
  CameraSpec camera;
  VehicleParams vehicle;
  // watch mode only
  std::shared_ptr<const PolicyNet> net;
  LatencyModel latency;
  double lookahead = kDefaultLookahead;
  std::uint64_t seed = 0;
};

/// Single-threaded core. Callers serialise access (WsServer holds a mutex).
class ServeSession {
 public:
  explicit ServeSession(ServeConfig cfg);

  /// Handle one client message; returns replies (errors only, usually).
  std::vector<WsMessage> on_client(const WsMessage& msg);
  /// Same for a raw text frame; undecodable input becomes an error reply.
  std::vector<WsMessage> on_text(const std::string& text);
  /// Advance one tick of d seconds and return what to stream.
  std::vector<WsMessage> tick();
  /// Client went away: teleop zeroes the control, watch keeps running.
  void on_disconnect();

  bool running() const { return running_; }
  ServeMode mode() const { return mode_; }
  const VehicleState& state() const { return state_; }
  std::int64_t tick_count() const { return tick_; }
  double period() const { return cfg_.d; }
  double sim_time() const { return static_cast<double>(tick_) * cfg_.d; }
  Action control() const { return control_; }

  /// Routes recorded so far (teleop episodes that ran under mark_route and
  /// did not end in a collision).
  const DemoDataset& recorded() const { return recorded_; }
  /// Trace of the current or most recent episode.
  const std::vector<TickLog>& trace() const { return trace_; }
  const Scenario& scenario() const { return scenario_; }

 private:
  void start(const Scenario& scenario);
  void finish(const std::string& termination, std::vector<WsMessage>& out);
  WsMessage make(WsType type, nlohmann::json body);

  ServeConfig cfg_;
  ServeMode mode_;
  Scenario scenario_;
  std::uint64_t out_seq_ = 0;
  std::optional<std::uint64_t> last_control_seq_;
  Action control_;
  VehicleState state_;
  std::int64_t tick_ = 0;
  bool running_ = false;

  std::optional<Instruction> route_label_;
  std::vector<Sample> route_;
  DemoDataset recorded_;
  std::vector<TickLog> trace_;

  // watch mode streams a pre-computed virtual-time episode
  std::optional<EpisodeResult> watch_;
};

/// WebSocket front end. One client at a time; extra connections get an
/// HTTP 409 and are closed.
class WsServer {
 public:
  struct Options {
    std::string address = "127.0.0.1";
    unsigned short port = 0;  // 0 picks a free port
    std::size_t queue_capacity = 512;
    bool pace = true;         // sleep so ticks run at d in wall time
  };

  WsServer(ServeSession& session, Options options);
  ~WsServer();
  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  /// Port actually bound (valid after construction).
  unsigned short port() const { return port_; }
  /// Blocks until stop(). Runs the tick driver and the connection handler.
  void run();
  void stop();

  /// Called after every tick with the session lock held (for recording).
  std::function<void(const ServeSession&)> on_tick;

 private:
  struct Impl;
  ServeSession& session_;
  Options options_;
  unsigned short port_ = 0;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sfd
