#pragma once

#include <poll.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <iostream>
#include <list>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "magpos/net.hpp"
#include "magpos/pca.hpp"
#include "magpos/pipeline.hpp"
#include "magpos/wire.hpp"

namespace magpos::pca {

using Json = nlohmann::json;

inline constexpr int kDefaultPositionPort = 5005;
inline constexpr int kDefaultBridgePort = 5006;
inline constexpr std::size_t kMaxBridgeMessage = 64 * 1024;

// ---------------------------------------------------------------------------------------------
// Bridge messages. One JSON object per line.
//
//   server -> client  {"type":"state", ...render state, "apps":[{"id","name"}]}
//   client -> server  {"type":"steer","x":<m>,"y":<m>}      relayed to the other clients
//   client -> server  {"type":"select","app":"<id>"}

inline Json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

inline Json to_json(const RenderState& s, const std::vector<AppInfo>& apps = {}) {
  Json j;
  j["type"] = "state";
  j["app"] = s.app_id;
  j["app_name"] = s.app_name;
  j["width"] = s.width;
  j["height"] = s.height;
  j["cursor"] = s.cursor ? Json{{"x", s.cursor->x}, {"y", s.cursor->y}} : Json(nullptr);
  j["dwell"] = s.dwell;
  j["click_count"] = s.click_count;
  j["clicked"] = s.clicked;
  Json tiles = Json::array();
  for (const Tile& t : s.tiles) {
    Json tj = rect_json(t.rect);
    tj["app"] = t.app_id;
    tj["name"] = t.name;
    tj["highlighted"] = t.highlighted;
    tiles.push_back(std::move(tj));
  }
  j["tiles"] = std::move(tiles);
  j["target"] = s.target ? rect_json(*s.target) : Json(nullptr);
  j["home_button"] = s.home_button ? rect_json(*s.home_button) : Json(nullptr);
  j["prompt"] = s.prompt;
  j["message"] = s.message;
  j["score"] = s.score;
  j["sequence"] = s.sequence;
  Json list = Json::array();
  for (const AppInfo& a : apps) list.push_back({{"id", a.id}, {"name", a.name}});
  j["apps"] = std::move(list);
  return j;
}

inline Json steer_message(const Vec2& target) { return {{"type", "steer"}, {"x", target.x()}, {"y", target.y()}}; }
inline Json select_message(const std::string& app) { return {{"type", "select"}, {"app", app}}; }

/// Validated client message.
struct SteerRequest {
  Vec2 target;
};
struct SelectRequest {
  std::string app;
};
using BridgeRequest = std::variant<SteerRequest, SelectRequest>;

inline std::optional<BridgeRequest> parse_bridge_message(std::string_view line) {
  const Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) return std::nullopt;
  if (*type == "steer") {
    const auto x = j.find("x");
    const auto y = j.find("y");
    if (x == j.end() || y == j.end() || !x->is_number() || !y->is_number()) return std::nullopt;
    const Vec2 p(x->get<double>(), y->get<double>());
    if (!p.allFinite()) return std::nullopt;
    return SteerRequest{p};
  }
  if (*type == "select") {
    const auto app = j.find("app");
    if (app == j.end() || !app->is_string()) return std::nullopt;
    return SelectRequest{app->get<std::string>()};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------------------------
// Position Receiver

struct ReceiverCounters {
  long received = 0;
  long malformed = 0;  // grammar violations, oversized lines included
  long connections = 0;
  long preempted = 0;
};

/// Socket server for the position stream. One client at a time; a new connection preempts
/// the current one. Valid positions are stored and then passed to every observer in arrival
/// order, on the receiver thread.
class PositionReceiver {
 public:
  using Observer = std::function<void(const Vec2& position, double t)>;

  explicit PositionReceiver(const net::Endpoint& listen) : listener_(listen) {}

  PositionReceiver(const PositionReceiver&) = delete;
  PositionReceiver& operator=(const PositionReceiver&) = delete;
  ~PositionReceiver() { stop(); }

  /// Observers must be attached before start().
  void subscribe(Observer o) { observers_.push_back(std::move(o)); }

  void start() {
    if (worker_.joinable()) return;
    epoch_ = std::chrono::steady_clock::now();
    worker_ = std::jthread([this](std::stop_token st) { run(st); });
  }

  void stop() {
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_.join();
    }
  }

  int port() const { return listener_.port(); }
  bool has_client() const { return has_client_.load(); }

  ReceiverCounters counters() const {
    std::lock_guard lock(mutex_);
    return counters_;
  }

  std::optional<Vec2> latest() const {
    std::lock_guard lock(mutex_);
    return latest_;
  }

  /// Applies raw bytes as if they came from the connected client. Returns valid positions seen.
  long ingest(std::string_view bytes, double t) {
    long valid = 0;
    for (const auto& line : framer_.feed(bytes)) {
      std::optional<Vec2> p = line.oversized ? std::nullopt : wire::parse_position(line.text);
      if (!p) {
        std::lock_guard lock(mutex_);
        ++counters_.malformed;
        continue;
      }
      {
        std::lock_guard lock(mutex_);
        ++counters_.received;
        latest_ = *p;
      }
      for (const Observer& o : observers_) o(*p, t);
      ++valid;
    }
    return valid;
  }

 private:
  void run(std::stop_token st) {
    net::Socket client;
    while (!st.stop_requested()) {
      pollfd fds[2] = {{listener_.fd(), POLLIN, 0}, {client.fd(), POLLIN, 0}};
      const int n = ::poll(fds, client ? 2 : 1, 50);
      if (n <= 0) continue;
      if (fds[0].revents & POLLIN) {
        net::Socket fresh = listener_.accept(0);
        if (fresh) {
          std::lock_guard lock(mutex_);
          ++counters_.connections;
          if (client) ++counters_.preempted;
          client = std::move(fresh);
          framer_.reset();
          has_client_ = true;
          continue;
        }
      }
      if (client && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) {
        const auto bytes = client.receive(0);
        if (!bytes) {
          client.close();
          framer_.reset();
          has_client_ = false;
          continue;
        }
        ingest(*bytes, std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count());
      }
    }
    has_client_ = false;
  }

  net::TcpListener listener_;
  std::vector<Observer> observers_;
  wire::LineFramer framer_;
  mutable std::mutex mutex_;
  ReceiverCounters counters_;
  std::optional<Vec2> latest_;
  std::atomic<bool> has_client_{false};
  std::chrono::steady_clock::time_point epoch_ = std::chrono::steady_clock::now();
  std::jthread worker_;
};

// ---------------------------------------------------------------------------------------------
// UI bridge

struct BridgeCounters {
  long clients = 0;
  long states_sent = 0;
  long steers = 0;
  long selects = 0;
  long malformed = 0;
};

/// Newline-delimited JSON channel for UI clients. Publishes state snapshots to every client,
/// relays steering messages between clients and forwards app selections.
class UiBridge {
 public:
  using SelectHandler = std::function<void(const std::string&)>;
  using SteerHandler = std::function<void(const Vec2&)>;

  explicit UiBridge(const net::Endpoint& listen) : listener_(listen) {}

  UiBridge(const UiBridge&) = delete;
  UiBridge& operator=(const UiBridge&) = delete;
  ~UiBridge() { stop(); }

  void on_select(SelectHandler h) { on_select_ = std::move(h); }
  void on_steer(SteerHandler h) { on_steer_ = std::move(h); }

  void start() {
    if (!worker_.joinable()) worker_ = std::jthread([this](std::stop_token st) { run(st); });
  }

  void stop() {
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_.join();
    }
    std::lock_guard lock(mutex_);
    clients_.clear();
  }

  int port() const { return listener_.port(); }

  std::size_t client_count() const {
    std::lock_guard lock(mutex_);
    return clients_.size();
  }

  BridgeCounters counters() const {
    std::lock_guard lock(mutex_);
    return counters_;
  }

  /// Sends the snapshot to every client and keeps it for clients that connect later.
  void publish(const Json& state) {
    std::lock_guard lock(mutex_);
    last_state_ = state.dump() + "\n";
    for (Client& c : clients_) {
      if (c.socket.send_all(last_state_)) ++counters_.states_sent;
      else c.dead = true;
    }
  }

 private:
  struct Client {
    net::Socket socket;
    wire::LineFramer framer{kMaxBridgeMessage};
    bool dead = false;
  };

  void run(std::stop_token st) {
    while (!st.stop_requested()) {
      std::vector<pollfd> fds;
      {
        std::lock_guard lock(mutex_);
        clients_.remove_if([](const Client& c) { return c.dead; });
        fds.push_back({listener_.fd(), POLLIN, 0});
        for (const Client& c : clients_) fds.push_back({c.socket.fd(), POLLIN, 0});
      }
      if (::poll(fds.data(), fds.size(), 50) <= 0) continue;
      if (fds[0].revents & POLLIN) {
        net::Socket s = listener_.accept(0);
        if (s) {
          std::lock_guard lock(mutex_);
          ++counters_.clients;
          if (!last_state_.empty()) s.send_all(last_state_);
          clients_.push_back({std::move(s), wire::LineFramer(kMaxBridgeMessage), false});
        }
      }
      for (std::size_t i = 1; i < fds.size(); ++i) {
        if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        handle_readable(fds[i].fd);
      }
    }
  }

  void handle_readable(int fd) {
    std::vector<std::string> lines;
    {
      std::lock_guard lock(mutex_);
      for (Client& c : clients_) {
        if (c.socket.fd() != fd || c.dead) continue;
        const auto bytes = c.socket.receive(0);
        if (!bytes) {
          c.dead = true;
          return;
        }
        for (auto& l : c.framer.feed(*bytes)) {
          if (l.oversized) ++counters_.malformed;
          else lines.push_back(std::move(l.text));
        }
      }
    }
    for (const std::string& line : lines) dispatch(fd, line);
  }

  void dispatch(int from_fd, const std::string& line) {
    const auto req = parse_bridge_message(line);
    if (!req) {
      std::lock_guard lock(mutex_);
      ++counters_.malformed;
      return;
    }
    if (const auto* steer = std::get_if<SteerRequest>(&*req)) {
      const std::string relay = steer_message(steer->target).dump() + "\n";
      {
        std::lock_guard lock(mutex_);
        ++counters_.steers;
        for (Client& c : clients_) {
          if (c.socket.fd() != from_fd && !c.socket.send_all(relay)) c.dead = true;
        }
      }
      if (on_steer_) on_steer_(steer->target);
    } else if (const auto* select = std::get_if<SelectRequest>(&*req)) {
      {
        std::lock_guard lock(mutex_);
        ++counters_.selects;
      }
      if (on_select_) on_select_(select->app);
    }
  }

  net::TcpListener listener_;
  SelectHandler on_select_;
  SteerHandler on_steer_;
  mutable std::mutex mutex_;
  std::list<Client> clients_;
  std::string last_state_;
  BridgeCounters counters_;
  std::jthread worker_;
};

/// Reconnecting bridge client. Delivers each received JSON message to `on_message` on its
/// own thread.
class BridgeClient {
 public:
  using Handler = std::function<void(const Json&)>;

  BridgeClient(net::Endpoint endpoint, Handler on_message)
      : endpoint_(std::move(endpoint)),
        on_message_(std::move(on_message)),
        worker_([this](std::stop_token st) { run(st); }) {}

  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;
  ~BridgeClient() {
    worker_.request_stop();
    if (worker_.joinable()) worker_.join();
  }

  bool connected() const { return connected_.load(); }

  bool send(const Json& message) {
    std::lock_guard lock(mutex_);
    return socket_ && socket_.send_all(message.dump() + "\n");
  }

 private:
  void run(std::stop_token st) {
    wire::LineFramer framer(kMaxBridgeMessage);
    while (!st.stop_requested()) {
      if (!connected_) {
        net::Socket s = net::connect_to(endpoint_, std::chrono::milliseconds(200));
        if (!s) {
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
          continue;
        }
        std::lock_guard lock(mutex_);
        socket_ = std::move(s);
        framer.reset();
        connected_ = true;
      }
      const auto bytes = socket_.receive(50);
      if (!bytes) {
        std::lock_guard lock(mutex_);
        socket_.close();
        connected_ = false;
        continue;
      }
      for (const auto& line : framer.feed(*bytes)) {
        if (line.oversized) continue;
        const Json j = Json::parse(line.text, nullptr, false);
        if (!j.is_discarded() && on_message_) on_message_(j);
      }
    }
  }

  net::Endpoint endpoint_;
  Handler on_message_;
  std::mutex mutex_;
  net::Socket socket_;
  std::atomic<bool> connected_{false};
  std::jthread worker_;
};

/// Live position source for the pipeline: follows `steer` messages seen on the bridge.
class BridgeSteering {
 public:
  BridgeSteering(const net::Endpoint& bridge, Vec2 start, double max_speed = 1.2)
      : visitor_(start, max_speed), client_(bridge, [this](const Json& j) {
          if (j.value("type", "") != "steer") return;
          if (const auto req = parse_bridge_message(j.dump()))
            visitor_.set_target(std::get<SteerRequest>(*req).target);
        }) {}

  void set_bounds(const Vec2& lo, const Vec2& hi) { visitor_.set_bounds(lo, hi); }
  PositionSource source() {
    return [this](double t) { return visitor_.advance(t); };
  }
  bool connected() const { return client_.connected(); }

 private:
  SteeredVisitor visitor_;
  BridgeClient client_;
};

// ---------------------------------------------------------------------------------------------
// PCA server

struct PcaServerConfig {
  net::Endpoint listen{"127.0.0.1", kDefaultPositionPort};
  std::optional<net::Endpoint> bridge;  // nullopt: no UI bridge
};

/// Position Receiver, event thread and UI bridge around one execution environment.
/// The receiver thread only enqueues; the environment is touched by the event thread alone.
class PcaServer {
 public:
  using StateObserver = std::function<void(const RenderState&)>;

  PcaServer(const PcaServerConfig& config, ExecutionEnvironment env)
      : env_(std::move(env)), receiver_(config.listen) {
    if (config.bridge) {
      bridge_.emplace(*config.bridge);
      bridge_->on_select([this](const std::string& app) { enqueue(SelectRequest{app}); });
    }
    state_ = env_.state();
    receiver_.subscribe([this](const Vec2& p, double t) { enqueue(PositionUpdate{p, t}); });
    events_ = std::jthread([this](std::stop_token st) { event_loop(st); });
    if (bridge_) {
      bridge_->start();
      bridge_->publish(to_json(state_, env_.apps()));
    }
    receiver_.start();
  }

  PcaServer(const PcaServer&) = delete;
  PcaServer& operator=(const PcaServer&) = delete;

  ~PcaServer() {
    receiver_.stop();
    if (bridge_) bridge_->stop();
    events_.request_stop();
    queue_cv_.notify_all();
    if (events_.joinable()) events_.join();
  }

  /// Called on the event thread after each state change.
  void on_state(StateObserver o) {
    std::lock_guard lock(state_mutex_);
    state_observers_.push_back(std::move(o));
  }

  void select(const std::string& app) { enqueue(SelectRequest{app}); }

  int port() const { return receiver_.port(); }
  std::optional<int> bridge_port() const { return bridge_ ? std::optional<int>(bridge_->port()) : std::nullopt; }
  const PositionReceiver& receiver() const { return receiver_; }
  ReceiverCounters receiver_counters() const { return receiver_.counters(); }
  std::optional<BridgeCounters> bridge_counters() const {
    return bridge_ ? std::optional<BridgeCounters>(bridge_->counters()) : std::nullopt;
  }

  RenderState state() const {
    std::lock_guard lock(state_mutex_);
    return state_;
  }

  EnvironmentCounters environment_counters() const {
    std::lock_guard lock(state_mutex_);
    return env_counters_;
  }

  /// Blocks until the event thread has handled `count` positions in total.
  bool wait_for_positions(long count, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(state_mutex_);
    return state_cv_.wait_for(lock, timeout, [&] { return env_counters_.positions >= count; });
  }

 private:
  struct PositionUpdate {
    Vec2 position;
    double t;
  };
  using Command = std::variant<PositionUpdate, SelectRequest>;

  void enqueue(Command c) {
    {
      std::lock_guard lock(queue_mutex_);
      queue_.push_back(std::move(c));
    }
    queue_cv_.notify_one();
  }

  void event_loop(std::stop_token st) {
    while (true) {
      Command cmd;
      {
        std::unique_lock lock(queue_mutex_);
        queue_cv_.wait(lock, st, [&] { return !queue_.empty(); });
        if (queue_.empty()) return;
        cmd = std::move(queue_.front());
        queue_.pop_front();
      }
      RenderState s;
      try {
        if (const auto* u = std::get_if<PositionUpdate>(&cmd)) {
          s = env_.on_position(u->position, u->t);
        } else {
          const auto& sel = std::get<SelectRequest>(cmd);
          if (!env_.select(sel.app)) std::clog << "select: unknown app '" << sel.app << "'\n";
          s = env_.state();
        }
      } catch (const std::exception& e) {
        std::clog << "pca event failed: " << e.what() << "\n";
        continue;
      }
      std::vector<StateObserver> observers;
      {
        std::lock_guard lock(state_mutex_);
        state_ = s;
        env_counters_ = env_.counters();
        observers = state_observers_;
      }
      state_cv_.notify_all();
      for (const auto& o : observers) o(s);
      if (bridge_) bridge_->publish(to_json(s, env_.apps()));
    }
  }

  ExecutionEnvironment env_;
  std::optional<UiBridge> bridge_;
  PositionReceiver receiver_;

  std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::deque<Command> queue_;

  mutable std::mutex state_mutex_;
  mutable std::condition_variable state_cv_;
  RenderState state_;
  EnvironmentCounters env_counters_;
  std::vector<StateObserver> state_observers_;

  std::jthread events_;
};

}  // namespace magpos::pca
