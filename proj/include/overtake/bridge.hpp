#pragma once

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "json.hpp"

#include "overtake/output.hpp"
#include "overtake/scenario_io.hpp"
#include "overtake/sim.hpp"

namespace overtake {

inline constexpr int kBridgeProtocolVersion = 1;

inline nlohmann::json hello_message() {
  return {{"type", "hello"},
          {"protocol", "overtake-bridge"},
          {"version", kBridgeProtocolVersion},
          {"schema_version", kSchemaVersion}};
}

namespace detail {

inline nlohmann::json point_json(Vec2 p) { return {p.x, p.y}; }

inline nlohmann::json state_json(const VehicleState& s) {
  return {{"x", s.x}, {"y", s.y}, {"psi", s.psi}, {"v", s.v}};
}

}  // namespace detail

/// Self-contained snapshot of the session after a planner tick.
inline nlohmann::json state_frame(const Simulation& sim, long tick, bool running) {
  using detail::point_json;
  const PlanSnapshot& plan = sim.last_plan();
  nlohmann::json actors = nlohmann::json::array();
  for (const ObstacleVehicle& a : sim.actor_vehicles()) {
    nlohmann::json item = detail::state_json(a.state);
    item["id"] = a.id;
    item["length"] = a.geom.length;
    item["width"] = a.geom.width;
    actors.push_back(item);
  }
  nlohmann::json horizon = nlohmann::json::array();
  for (const VehicleState& x : plan.solution.states) horizon.push_back(point_json(x.position()));
  nlohmann::json reach = nlohmann::json::array();
  for (const Vec2& p : plan.reach.boundary) reach.push_back(point_json(p));
  nlohmann::json ssr = nlohmann::json::array();
  for (const Vec2& p : plan.ssr.points) ssr.push_back(point_json(p));

  const std::vector<TickLog>& logs = sim.logs();
  const RunMetrics m = sim.finish();
  nlohmann::json ego = detail::state_json(sim.ego());
  ego["length"] = sim.scenario().ego.geom.length;
  ego["width"] = sim.scenario().ego.geom.width;
  return {{"type", "frame"},
          {"t", logs.empty() ? 0.0 : logs.back().t},
          {"tick", tick},
          {"running", running},
          {"fsm", std::string(to_string(sim.state()))},
          {"ego", ego},
          {"actors", actors},
          {"p_ref", point_json(plan.target.p_ref)},
          {"p_interim", point_json(plan.interim.p_interim)},
          {"v_ref", plan.interim.v_ref},
          {"horizon", horizon},
          {"reachable_outline", reach},
          {"safe_reachable_points", ssr},
          {"solver",
           {{"status", std::string(to_string(plan.solution.status))},
            {"iterations", plan.solution.iterations},
            {"kkt_residual", plan.solution.kkt_residual}}},
          {"metrics", metrics_to_json(m)}};
}

/// Parsed client message.
struct BridgeRequest {
  std::string kind;
  nlohmann::json id;  // echoed in the acknowledgement
  double issued_at = 0.0;
  double speed = 0.0;
  double gap = 0.0;
  double factor = 1.0;
};

/// Validates one line of client input; throws std::invalid_argument with a reason.
inline BridgeRequest parse_request(std::string_view line) {
  const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("message is not a JSON object");
  if (j.value("type", "") != "command") throw std::invalid_argument("type must be \"command\"");
  BridgeRequest r;
  if (!j.contains("kind") || !j["kind"].is_string()) throw std::invalid_argument("missing kind");
  r.kind = j["kind"].get<std::string>();
  r.id = j.value("id", nlohmann::json());
  auto number = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
    return j[key].get<double>();
  };
  r.issued_at = number("issued_at", 0.0);
  static const std::vector<std::string> kinds = {
      "start",           "pause",         "resume",         "reset", "set_speed_factor",
      "trigger_overtake", "trigger_abort", "spawn_oncoming", "shutdown"};
  if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) {
    throw std::invalid_argument("unknown kind \"" + r.kind + "\"");
  }
  if (r.kind == "spawn_oncoming") {
    r.speed = number("speed", 0.0);
    r.gap = number("gap", 0.0);
    if (!(r.speed > 0.0) || !(r.gap > 0.0)) {
      throw std::invalid_argument("spawn_oncoming needs positive speed and gap");
    }
  }
  if (r.kind == "set_speed_factor") {
    r.factor = number("factor", 0.0);
    if (!(r.factor > 0.0)) throw std::invalid_argument("factor must be > 0");
  }
  return r;
}

struct BridgeOptions {
  int port = 8765;
  bool autostart = false;       // tick without waiting for "start"
  double speed_factor = 1.0;    // simulated seconds per wall-clock second
  bool loopback_only = true;
};

/// Single-client session server. Messages are newline-terminated JSON objects; the
/// first server message on every connection is a hello carrying the protocol version.
class BridgeServer {
 public:
  BridgeServer(Scenario scenario, BridgeOptions options)
      : sim_(std::move(scenario)), opt_(options), running_(options.autostart),
        speed_factor_(options.speed_factor) {}

  ~BridgeServer() {
    close_client();
    if (listen_fd_ >= 0) ::close(listen_fd_);
  }

  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  /// Binds the listening socket; returns the bound port (useful with port 0).
  int bind() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(opt_.port));
    addr.sin_addr.s_addr = htonl(opt_.loopback_only ? INADDR_LOOPBACK : INADDR_ANY);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      throw std::runtime_error("bind port " + std::to_string(opt_.port) + ": " + std::strerror(errno));
    }
    if (::listen(listen_fd_, 1) < 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  /// Runs until a shutdown command arrives.
  void serve() {
    if (listen_fd_ < 0) bind();
    using clock = std::chrono::steady_clock;
    auto next_tick = clock::now();
    while (!shutdown_) {
      int timeout_ms = 100;
      if (ticking()) {
        const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_tick - clock::now());
        timeout_ms = static_cast<int>(std::clamp<long long>(wait.count(), 0, 100));
      }
      poll_once(timeout_ms);
      if (ticking() && clock::now() >= next_tick) {
        tick();
        const double period = sim_.scenario().planner_period / speed_factor_;
        next_tick += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(period));
        if (next_tick < clock::now()) next_tick = clock::now();
      } else if (!ticking()) {
        next_tick = clock::now();
      }
    }
    close_client();
  }

  const Simulation& simulation() const { return sim_; }

 private:
  bool ticking() const { return running_ && client_fd_ >= 0 && !sim_.done(); }

  void poll_once(int timeout_ms) {
    pollfd fds[2];
    nfds_t n = 0;
    if (client_fd_ < 0) {
      fds[n++] = {listen_fd_, POLLIN, 0};
    } else {
      fds[n++] = {client_fd_, POLLIN, 0};
    }
    const int rc = ::poll(fds, n, timeout_ms);
    if (rc <= 0) return;
    if (client_fd_ < 0) {
      if (fds[0].revents & POLLIN) accept_client();
      return;
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) read_client();
  }

  void accept_client() {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    client_fd_ = fd;
    buffer_.clear();
    send(hello_message());
    send(state_frame(sim_, tick_, running_));
  }

  void close_client() {
    if (client_fd_ >= 0) ::close(client_fd_);
    client_fd_ = -1;
  }

  void read_client() {
    char chunk[4096];
    const ssize_t got = ::recv(client_fd_, chunk, sizeof chunk, 0);
    if (got <= 0) {
      // Disconnect pauses the session until an operator reconnects and resumes.
      close_client();
      running_ = false;
      return;
    }
    buffer_.append(chunk, static_cast<std::size_t>(got));
    std::size_t pos;
    while ((pos = buffer_.find('\n')) != std::string::npos) {
      const std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      handle_line(line);
      if (client_fd_ < 0) return;
    }
    if (buffer_.size() > kMaxLine) {
      buffer_.clear();
      send({{"type", "error"}, {"message", "line too long"}});
    }
  }

  void handle_line(const std::string& line) {
    BridgeRequest r;
    try {
      r = parse_request(line);
    } catch (const std::invalid_argument& e) {
      send({{"type", "error"}, {"message", e.what()}});
      return;
    }
    if (r.kind == "trigger_overtake" || r.kind == "trigger_abort" || r.kind == "spawn_oncoming") {
      SessionCommand c;
      c.kind = r.kind == "trigger_overtake" ? CommandKind::trigger_overtake
               : r.kind == "trigger_abort"  ? CommandKind::trigger_abort
                                            : CommandKind::spawn_oncoming;
      c.speed = r.speed;
      c.gap = r.gap;
      sim_.commands().push(c);
      pending_.push_back(r);
      // Acknowledged once the engine drains it at the next planner tick.
      return;
    }
    bool ignored = false;
    if (r.kind == "start" || r.kind == "resume") {
      ignored = running_ || sim_.done();
      running_ = !sim_.done();
    } else if (r.kind == "pause") {
      ignored = !running_;
      running_ = false;
    } else if (r.kind == "reset") {
      sim_.reset();
      sim_.commands().drain();
      pending_.clear();
      tick_ = 0;
      running_ = false;
    } else if (r.kind == "set_speed_factor") {
      speed_factor_ = r.factor;
    } else if (r.kind == "shutdown") {
      shutdown_ = true;
    }
    send(ack(r, ignored, sim_.time()));
    if (r.kind == "reset") send(state_frame(sim_, tick_, running_));
  }

  void tick() {
    sim_.step();
    ++tick_;
    const std::vector<CommandOutcome>& outcomes = sim_.command_outcomes();
    // Outcomes include scheduled scenario events first; operator commands follow in order.
    const std::size_t first = outcomes.size() >= pending_.size() ? outcomes.size() - pending_.size() : 0;
    for (std::size_t i = first, k = 0; i < outcomes.size() && k < pending_.size(); ++i, ++k) {
      send(ack(pending_[k], outcomes[i].ignored, outcomes[i].t));
    }
    pending_.clear();
    send(state_frame(sim_, tick_, running_));
    if (sim_.done()) {
      running_ = false;
      send({{"type", "finished"}, {"metrics", metrics_to_json(sim_.finish())}});
    }
  }

  static nlohmann::json ack(const BridgeRequest& r, bool ignored, double t) {
    return {{"type", "ack"}, {"kind", r.kind},    {"id", r.id},
            {"issued_at", r.issued_at}, {"ignored", ignored}, {"t", t}};
  }

  void send(const nlohmann::json& message) {
    if (client_fd_ < 0) return;
    const std::string text = message.dump() + "\n";
    std::size_t sent = 0;
    while (sent < text.size()) {
      const ssize_t n = ::send(client_fd_, text.data() + sent, text.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        close_client();
        running_ = false;
        return;
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  static constexpr std::size_t kMaxLine = 1 << 16;

  Simulation sim_;
  BridgeOptions opt_;
  bool running_ = false;
  bool shutdown_ = false;
  double speed_factor_ = 1.0;
  long tick_ = 0;
  int listen_fd_ = -1;
  int client_fd_ = -1;
  std::string buffer_;
  std::vector<BridgeRequest> pending_;
};

}  // namespace overtake
