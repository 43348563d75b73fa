#pragma once

#include "cobotpbd/gateway/hub.hpp"
#include "cobotpbd/primitives/schema.hpp"
#include "cobotpbd/taskflow/engine.hpp"

#include <httplib.h>
// <resolv.h> defines _res as a macro, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace cobotpbd::gateway {

/// Bounded outbound queue of encoded lines. When full, the oldest line is
/// dropped so a slow reader cannot stall the engine.
class Outbox {
 public:
  explicit Outbox(std::size_t capacity = 4096) : capacity_(capacity) {}

  void push(std::string line) {
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() >= capacity_) {
        queue_.pop_front();
        ++dropped_;
      }
      queue_.push_back(std::move(line));
    }
    cv_.notify_one();
  }

  /// Waits up to `timeout` for at least one line.
  std::deque<std::string> take(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    std::deque<std::string> out;
    out.swap(queue_);
    return out;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  std::size_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

struct ServiceConfig {
  double snapshot_hz = 60.0;
  bool stream_haptics = true;
};

/// Runs the engine loop in real time on its own thread, feeding it from the
/// hub and broadcasting snapshots and haptic frames at snapshot_hz.
class EngineService {
 public:
  EngineService(taskflow::Engine& engine, ServiceConfig cfg = {})
      : engine_(engine), cfg_(cfg), hub_([this](taskflow::Command c) { engine_.enqueue(std::move(c)); }) {
    if (!(cfg_.snapshot_hz > 0.0)) throw ConfigError("snapshot rate must be positive");
  }
  ~EngineService() { stop(); }

  Hub& hub() { return hub_; }

  void start() {
    if (running_.exchange(true)) return;
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (thread_.joinable()) thread_.join();
  }

  std::uint64_t ticks() const { return ticks_.load(); }

 private:
  void loop() {
    using clock = std::chrono::steady_clock;
    const auto tick_period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(engine_.config().dt()));
    const auto snap_period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / cfg_.snapshot_hz));
    auto next_tick = clock::now();
    auto next_snap = next_tick;
    while (running_.load()) {
      engine_.tick();
      ticks_.fetch_add(1);
      for (const auto& o : engine_.drain_outbox()) hub_.reply(o.client, {o.diagnostic});
      const auto now = clock::now();
      if (now >= next_snap) {
        hub_.broadcast(MessageType::state_snapshot, engine_.snapshot_json());
        if (cfg_.stream_haptics) hub_.broadcast(MessageType::haptic_frame, haptics::frame_to_json(engine_.haptic_frame()));
        next_snap += snap_period;
        if (next_snap < now) next_snap = now + snap_period;
      }
      next_tick += tick_period;
      if (next_tick < now) next_tick = now;  // fell behind: do not try to catch up in a burst
      std::this_thread::sleep_until(next_tick);
    }
  }

  taskflow::Engine& engine_;
  ServiceConfig cfg_;
  Hub hub_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> ticks_{0};
  std::thread thread_;
};

/// NDJSON over TCP, one thread per connection.
class TcpServer {
 public:
  explicit TcpServer(Hub& hub) : hub_(hub) {}
  ~TcpServer() { stop(); }

  /// Binds and starts accepting. Port 0 picks a free port; see port().
  void start(int port, const std::string& host = "0.0.0.0") {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error("socket() failed");
    int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("invalid host '" + host + "'");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw Error("cannot listen on " + host + ":" + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
    std::lock_guard lock(mutex_);
    for (auto& c : connections_) {
      if (c->thread.joinable()) c->thread.join();
    }
    connections_.clear();
  }

  int port() const { return port_; }

 private:
  struct Connection {
    int fd = -1;
    Outbox outbox;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop() {
    while (running_) {
      pollfd pfd{listen_fd_, POLLIN, 0};
      if (::poll(&pfd, 1, 50) <= 0) {
        reap();
        continue;
      }
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      int yes = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
      auto conn = std::make_shared<Connection>();
      conn->fd = fd;
      std::lock_guard lock(mutex_);
      connections_.push_back(conn);
      conn->thread = std::thread([this, conn] { serve(conn); });
    }
  }

  void reap() {
    std::lock_guard lock(mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->done) {
        if ((*it)->thread.joinable()) (*it)->thread.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }

  static bool write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  void serve(const std::shared_ptr<Connection>& shared) {
    Connection& conn = *shared;
    const ClientId id = hub_.connect([shared](const Message& m) { shared->outbox.push(encode(m)); });
    LineDecoder decoder;
    char buf[8192];
    bool alive = true;
    while (alive && running_) {
      pollfd pfd{conn.fd, POLLIN, 0};
      const int r = ::poll(&pfd, 1, 5);
      if (r > 0 && (pfd.revents & (POLLIN | POLLHUP | POLLERR))) {
        const ssize_t n = ::recv(conn.fd, buf, sizeof(buf), 0);
        if (n <= 0) {
          alive = false;
        } else {
          for (const auto& result : decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)))) hub_.handle(id, result);
        }
      }
      for (const auto& line : conn.outbox.take(std::chrono::milliseconds(0))) {
        if (!write_all(conn.fd, line)) {
          alive = false;
          break;
        }
      }
    }
    hub_.disconnect(id);
    ::close(conn.fd);
    conn.done = true;
  }

  Hub& hub_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex mutex_;
  std::list<std::shared_ptr<Connection>> connections_;
};

/// Browser-compatible channel carrying the same NDJSON frames:
///   POST /connect             -> {"client": id}
///   GET  /events?client=id    -> text/event-stream, one frame per `data:` event
///   POST /send?client=id      -> body is one or more NDJSON lines
///   POST /disconnect?client=id
///   GET  /schema              -> primitive parameter schema
/// A client whose event stream closes is disconnected.
class HttpBridge {
 public:
  explicit HttpBridge(Hub& hub) : hub_(hub) { routes(); }
  ~HttpBridge() { stop(); }

  /// Starts serving on a background thread. Port 0 picks a free port.
  void start(int port, const std::string& host = "0.0.0.0") {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
    std::lock_guard lock(mutex_);
    for (auto& [id, s] : sessions_) {
      s->outbox.close();
      hub_.disconnect(id);
    }
    sessions_.clear();
  }

  int port() const { return port_; }

 private:
  struct Session {
    Outbox outbox;
    LineDecoder decoder;
    std::mutex decoder_mutex;
  };

  std::shared_ptr<Session> find(const httplib::Request& req) {
    if (!req.has_param("client")) return nullptr;
    ClientId id = 0;
    try {
      id = std::stoull(req.get_param_value("client"));
    } catch (const std::exception&) {
      return nullptr;
    }
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void drop(ClientId id) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mutex_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) return;
      s = it->second;
      sessions_.erase(it);
    }
    s->outbox.close();
    hub_.disconnect(id);
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Post("/connect", [this](const httplib::Request&, httplib::Response& res) {
      auto session = std::make_shared<Session>();
      const ClientId id = hub_.connect([session](const Message& m) { session->outbox.push(encode(m)); });
      {
        std::lock_guard lock(mutex_);
        sessions_[id] = session;
      }
      res.set_content(json{{"client", id}}.dump(), "application/json");
    });

    server_.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      auto session = find(req);
      if (!session) {
        res.status = 404;
        return;
      }
      const ClientId id = std::stoull(req.get_param_value("client"));
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [session](std::size_t, httplib::DataSink& sink) {
            if (session->outbox.closed()) return false;
            auto lines = session->outbox.take(std::chrono::milliseconds(500));
            if (lines.empty()) return sink.write(": keepalive\n\n", 13);
            std::string chunk;
            for (auto& line : lines) {
              line.pop_back();  // the frame's newline becomes the event terminator
              chunk += "data: " + line + "\n\n";
            }
            return sink.write(chunk.data(), chunk.size());
          },
          [this, id](bool) { drop(id); });
    });

    server_.Post("/send", [this](const httplib::Request& req, httplib::Response& res) {
      auto session = find(req);
      if (!session) {
        res.status = 404;
        return;
      }
      const ClientId id = std::stoull(req.get_param_value("client"));
      std::vector<DecodeResult> results;
      {
        std::lock_guard lock(session->decoder_mutex);
        results = session->decoder.feed(req.body);
        if (session->decoder.pending_bytes() > 0) {
          auto tail = session->decoder.feed("\n");  // a request body is a complete batch
          results.insert(results.end(), tail.begin(), tail.end());
        }
      }
      for (const auto& r : results) hub_.handle(id, r);
      res.set_content(json{{"received", results.size()}}.dump(), "application/json");
    });

    server_.Post("/disconnect", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("client")) {
        res.status = 400;
        return;
      }
      try {
        drop(std::stoull(req.get_param_value("client")));
      } catch (const std::exception&) {
        res.status = 400;
        return;
      }
      res.status = 204;
    });

    server_.Get("/schema", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(primitives::primitive_schema_document().dump(2), "application/json");
    });
  }

  Hub& hub_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::mutex mutex_;
  std::map<ClientId, std::shared_ptr<Session>> sessions_;
};

}  // namespace cobotpbd::gateway
