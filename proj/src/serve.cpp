#include "sfd/serve.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <thread>

#include "base64.hpp"
#include "json_util.hpp"
#include "sfd/error.hpp"
#include "sfd/store.hpp"

namespace sfd {

using nlohmann::json;

namespace {

constexpr const char* kTypeNames[] = {"hello",  "control", "set_mode",    "start_episode",
                                      "stop",   "mark_route", "state",    "frame",
                                      "instruction", "episode_end", "error"};

void require(const json& j, const char* key, bool (json::*check)() const noexcept, const char* what) {
  if (!j.contains(key) || !(j.at(key).*check)()) {
    throw InvalidInput(std::string("message field '") + key + "' must be " + what);
  }
}

}  // namespace

std::string_view to_string(WsType type) { return kTypeNames[static_cast<int>(type)]; }

WsType ws_type_from_string(std::string_view text) {
  for (int i = 0; i < static_cast<int>(std::size(kTypeNames)); ++i) {
    if (text == kTypeNames[i]) return static_cast<WsType>(i);
  }
  throw InvalidInput("unknown message type '" + std::string(text) + "'");
}

std::string encode_ws(const WsMessage& msg) {
  json j = msg.body.is_object() ? msg.body : json::object();
  j["type"] = to_string(msg.type);
  j["seq"] = msg.seq;
  return j.dump();
}

WsMessage decode_ws(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("message is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidInput("message must be a JSON object");
  require(j, "type", &json::is_string, "a string");
  require(j, "seq", &json::is_number_unsigned, "a non-negative integer");
  WsMessage m;
  m.type = ws_type_from_string(j.at("type").get<std::string>());
  m.seq = j.at("seq").get<std::uint64_t>();
  j.erase("type");
  j.erase("seq");
  switch (m.type) {
    case WsType::control:
      require(j, "steering", &json::is_number, "a number");
      require(j, "throttle", &json::is_number, "a number");
      break;
    case WsType::set_mode: require(j, "mode", &json::is_string, "a string"); break;
    case WsType::start_episode:
      if (j.contains("scenario")) require(j, "scenario", &json::is_string, "a string");
      break;
    case WsType::mark_route: require(j, "class", &json::is_string, "a string"); break;
    case WsType::state: require(j, "state", &json::is_object, "an object"); break;
    case WsType::frame:
      require(j, "digest", &json::is_string, "a string");
      require(j, "png", &json::is_string, "a string");
      break;
    case WsType::instruction:
      require(j, "instruction", &json::is_string, "a string");
      require(j, "age", &json::is_number_integer, "an integer");
      break;
    case WsType::episode_end: require(j, "summary", &json::is_object, "an object"); break;
    case WsType::error: require(j, "text", &json::is_string, "a string"); break;
    case WsType::hello:
    case WsType::stop: break;
  }
  m.body = std::move(j);
  return m;
}

std::string_view to_string(ServeMode mode) { return mode == ServeMode::watch ? "watch" : "teleop"; }

ServeMode serve_mode_from_string(std::string_view text) {
  if (text == "teleop") return ServeMode::teleop;
  if (text == "watch") return ServeMode::watch;
  throw InvalidInput("unknown serve mode '" + std::string(text) + "'");
}

ServeSession::ServeSession(ServeConfig cfg) : cfg_(std::move(cfg)), mode_(cfg_.mode) {
  if (!(cfg_.d > 0.0)) throw InvalidInput("d must be positive");
  if (cfg_.frame_every < 1) throw InvalidInput("frame_every must be >= 1");
  if (mode_ == ServeMode::watch && !cfg_.net) throw InvalidInput("watch mode needs a model");
  cfg_.scenario.validate(cfg_.vehicle);
  start(cfg_.scenario);
}

WsMessage ServeSession::make(WsType type, json body) { return {type, ++out_seq_, std::move(body)}; }

void ServeSession::start(const Scenario& scenario) {
  scenario_ = scenario;
  state_ = scenario.start;
  control_ = {};
  tick_ = 0;
  route_.clear();
  trace_.clear();
  watch_.reset();
  running_ = true;
  if (mode_ == ServeMode::watch) {
    LoopConfig lc;
    lc.d = cfg_.d;
    lc.planner = std::make_shared<OraclePlanner>(cfg_.latency, cfg_.lookahead);
    lc.seed = cfg_.seed;
    lc.camera = cfg_.camera;
    lc.vehicle = cfg_.vehicle;
    watch_ = run_episode(scenario, *cfg_.net, lc);
  }
}

void ServeSession::finish(const std::string& termination, std::vector<WsMessage>& out) {
  running_ = false;
  const bool collided = termination.rfind("collision", 0) == 0;
  if (route_label_ && !collided && !route_.empty()) recorded_.append_route(std::move(route_), *route_label_);
  route_.clear();
  json summary = {{"scenario", scenario_.name},
                  {"termination", termination},
                  {"success", termination == "goal"},
                  {"ticks_run", tick_},
                  {"final_state", json_util::to_json(state_)}};
  out.push_back(make(WsType::episode_end, {{"summary", summary}}));
}

std::vector<WsMessage> ServeSession::on_text(const std::string& text) {
  try {
    return on_client(decode_ws(text));
  } catch (const InvalidInput& e) {
    return {make(WsType::error, {{"text", e.what()}})};
  }
}

std::vector<WsMessage> ServeSession::on_client(const WsMessage& msg) {
  std::vector<WsMessage> out;
  auto error = [&](const std::string& text) { out.push_back(make(WsType::error, {{"text", text}})); };
  try {
    switch (msg.type) {
      case WsType::hello:
        out.push_back(make(WsType::state, {{"tick", tick_}, {"t", sim_time()}, {"state", json_util::to_json(state_)},
                                           {"mode", to_string(mode_)}, {"scenario", scenario_.name}}));
        break;
      case WsType::control: {
        // stale or repeated controls are dropped silently
        if (last_control_seq_ && msg.seq <= *last_control_seq_) break;
        last_control_seq_ = msg.seq;
        const Action a{msg.body.at("steering").get<double>(), msg.body.at("throttle").get<double>()};
        validate_action(a);
        if (mode_ == ServeMode::teleop) control_ = a;
        break;
      }
      case WsType::set_mode: {
        const ServeMode m = serve_mode_from_string(msg.body.at("mode").get<std::string>());
        if (m == ServeMode::watch && !cfg_.net) throw InvalidInput("watch mode needs a model");
        mode_ = m;
        start(scenario_);
        break;
      }
      case WsType::start_episode: {
        const std::string name = msg.body.value("scenario", std::string());
        if (running_) finish("stopped", out);
        start(name.empty() ? scenario_ : load_scenario(name));
        break;
      }
      case WsType::stop:
        if (running_) finish("stopped", out);
        break;
      case WsType::mark_route: {
        const std::string cls = msg.body.at("class").get<std::string>();
        if (cls == "NONE" || cls == "none") {
          route_label_.reset();
          route_.clear();
        } else {
          const auto i = instruction_from_string(cls);
          if (!i) throw InvalidInput("bad route class '" + cls + "'");
          if (route_label_ != i) route_.clear();
          route_label_ = *i;
        }
        break;
      }
      default: error("message type '" + std::string(to_string(msg.type)) + "' is server-to-client only");
    }
  } catch (const Error& e) {
    error(e.what());
  } catch (const json::exception& e) {
    error(e.what());
  }
  return out;
}

void ServeSession::on_disconnect() {
  if (mode_ == ServeMode::teleop) control_ = {};
  last_control_seq_.reset();
}

std::vector<WsMessage> ServeSession::tick() {
  std::vector<WsMessage> out;
  if (!running_) return out;
  const double t = sim_time();
  const bool send_frame = tick_ % cfg_.frame_every == 0;

  if (mode_ == ServeMode::watch) {
    const EpisodeResult& ep = *watch_;
    const TickLog& log = ep.trace[static_cast<std::size_t>(tick_)];
    trace_.push_back(log);
    if (send_frame) {
      const Observation obs = render(log.state, scenario_, t, cfg_.camera);
      out.push_back(make(WsType::frame, {{"tick", tick_},
                                         {"digest", digest_hex(observation_digest(obs))},
                                         {"png", base64(encode_png(obs))}}));
    }
    json events = json::array();
    for (const auto& e : log.planner_events) {
      events.push_back(e.kind == PlannerEvent::Kind::issued    ? "issued"
                       : e.kind == PlannerEvent::Kind::arrived ? "arrived"
                                                               : "failed");
    }
    out.push_back(make(WsType::instruction, {{"tick", tick_},
                                             {"instruction", to_string(log.instruction_used)},
                                             {"age", log.instruction_age_ticks},
                                             {"events", events}}));
    ++tick_;
    state_ = static_cast<std::size_t>(tick_) < ep.trace.size() ? ep.trace[static_cast<std::size_t>(tick_)].state
                                                                : ep.final_state;
    out.push_back(make(WsType::state, {{"tick", tick_}, {"t", sim_time()}, {"state", json_util::to_json(state_)}}));
    if (static_cast<std::size_t>(tick_) >= ep.trace.size()) finish(std::string(to_string(ep.termination)), out);
    return out;
  }

  Observation obs = render(state_, scenario_, t, cfg_.camera);
  obs.tick = tick_;
  TickLog log;
  log.tick = tick_;
  log.state = state_;
  log.obs_digest = observation_digest(obs);
  log.instruction_used = route_label_.value_or(Instruction::middle);
  log.action = control_;
  if (send_frame) {
    out.push_back(make(WsType::frame, {{"tick", tick_},
                                       {"digest", digest_hex(log.obs_digest)},
                                       {"png", base64(encode_png(obs))}}));
  }
  if (route_label_) route_.push_back({std::move(obs), control_.steering, control_.throttle, index_of(*route_label_)});
  trace_.push_back(log);

  state_ = step_dynamics(state_, control_, cfg_.d, cfg_.vehicle);
  ++tick_;
  out.push_back(make(WsType::state, {{"tick", tick_}, {"t", sim_time()}, {"state", json_util::to_json(state_)}}));

  const CollisionReport hit = check_collision(state_, scenario_, sim_time(), cfg_.vehicle);
  if (hit.wall) {
    finish("collision_wall", out);
  } else if (hit.obstacle) {
    finish("collision_obstacle", out);
  } else if (state_.pose.x >= scenario_.goal_x) {
    finish("goal", out);
  } else if (tick_ >= scenario_.max_ticks) {
    finish("timeout", out);
  }
  return out;
}

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct WsServer::Impl {
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::mutex session_mutex;

  // Outbound queue shared by the tick thread and the connection handler.
  std::mutex queue_mutex;
  std::deque<std::string> queue;
  bool connected = false;  // guarded by queue_mutex

  // Connection state, touched only on the io thread.
  struct Client {
    explicit Client(tcp::socket s) : ws(std::move(s)) {}
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    bool writing = false;
    std::string out;
  };
  std::shared_ptr<Client> client;

  std::atomic<bool> stopping{false};
  std::thread ticker;
};

WsServer::WsServer(ServeSession& session, Options options)
    : session_(session), options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  const tcp::endpoint ep(asio::ip::make_address(options_.address), options_.port);
  auto& a = impl_->acceptor;
  a.open(ep.protocol());
  a.set_option(asio::socket_base::reuse_address(true));
  a.bind(ep);
  a.listen();
  port_ = a.local_endpoint().port();
}

WsServer::~WsServer() {
  stop();
  if (impl_->ticker.joinable()) impl_->ticker.join();
}

void WsServer::run() {
  Impl& im = *impl_;

  auto push = [&im, this](std::vector<WsMessage> msgs) {
    std::lock_guard lock(im.queue_mutex);
    if (!im.connected) return;
    for (auto& m : msgs) {
      if (im.queue.size() >= options_.queue_capacity) im.queue.pop_front();
      im.queue.push_back(encode_ws(m));
    }
  };

  std::function<void()> flush = [&im, &flush] {
    auto c = im.client;
    if (!c || c->writing) return;
    {
      std::lock_guard lock(im.queue_mutex);
      if (im.queue.empty()) return;
      c->out = std::move(im.queue.front());
      im.queue.pop_front();
    }
    c->writing = true;
    c->ws.text(true);
    c->ws.async_write(asio::buffer(c->out), [&im, &flush, c](beast::error_code ec, std::size_t) {
      c->writing = false;
      if (ec || im.client != c) return;
      flush();
    });
  };

  auto drop_client = [&im, this](const std::shared_ptr<Impl::Client>& c) {
    if (im.client != c) return;
    im.client.reset();
    {
      std::lock_guard lock(im.queue_mutex);
      im.connected = false;
      im.queue.clear();
    }
    std::lock_guard lock(im.session_mutex);
    session_.on_disconnect();
  };

  std::function<void(std::shared_ptr<Impl::Client>)> read_loop =
      [&im, &read_loop, &flush, &drop_client, &push, this](std::shared_ptr<Impl::Client> c) {
        c->ws.async_read(c->buffer, [&, c](beast::error_code ec, std::size_t) {
          if (ec) {
            drop_client(c);
            return;
          }
          const std::string text = beast::buffers_to_string(c->buffer.data());
          c->buffer.consume(c->buffer.size());
          {
            std::lock_guard lock(im.session_mutex);
            push(session_.on_text(text));
          }
          flush();
          read_loop(c);
        });
      };

  std::function<void()> accept_loop = [&im, &accept_loop, &read_loop, &flush, &push, this] {
    im.acceptor.async_accept([&](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      auto stream = std::make_shared<beast::tcp_stream>(std::move(socket));
      auto buffer = std::make_shared<beast::flat_buffer>();
      auto req = std::make_shared<http::request<http::string_body>>();
      stream->expires_after(std::chrono::seconds(10));
      http::async_read(*stream, *buffer, *req, [&, stream, buffer, req](beast::error_code rec, std::size_t) {
        if (rec) return;
        auto reject = [stream, req](http::status status, const std::string& why) {
          auto res = std::make_shared<http::response<http::string_body>>(status, req->version());
          res->set(http::field::content_type, "text/plain");
          res->body() = why + "\n";
          res->prepare_payload();
          http::async_write(*stream, *res, [stream, res](beast::error_code, std::size_t) {
            beast::error_code ignored;
            stream->socket().shutdown(tcp::socket::shutdown_both, ignored);
          });
        };
        if (req->target() != "/ws" || !websocket::is_upgrade(*req)) {
          reject(http::status::not_found, "the only endpoint is /ws (WebSocket)");
        } else if (im.client) {
          reject(http::status::conflict, "another client is connected");
        } else {
          stream->expires_never();
          auto c = std::make_shared<Impl::Client>(stream->release_socket());
          c->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
          im.client = c;
          c->ws.async_accept(*req, [&, c](beast::error_code aec) {
            if (aec) {
              if (im.client == c) im.client.reset();
              return;
            }
            {
              std::lock_guard lock(im.queue_mutex);
              im.connected = true;
            }
            read_loop(c);
            flush();
          });
        }
      });
      accept_loop();
    });
  };

  im.ticker = std::thread([&im, &flush, push, this] {
    const auto d = std::chrono::duration<double>(session_.period());
    const auto t0 = std::chrono::steady_clock::now();
    std::int64_t n = 0;
    while (!im.stopping) {
      {
        std::lock_guard lock(im.session_mutex);
        push(session_.tick());
        if (on_tick) on_tick(session_);
      }
      asio::post(im.ioc, [&flush] { flush(); });
      ++n;
      if (options_.pace) {
        std::this_thread::sleep_until(t0 + n * d);
      } else {
        std::this_thread::yield();
      }
    }
  });

  accept_loop();
  im.ioc.run();
  im.stopping = true;
  if (im.ticker.joinable()) im.ticker.join();
}

void WsServer::stop() {
  Impl& im = *impl_;
  if (im.stopping.exchange(true)) return;
  asio::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
    if (im.client) {
      im.client->ws.next_layer().socket().close(ec);
      im.client.reset();
    }
    im.ioc.stop();
  });
}

}  // namespace sfd
