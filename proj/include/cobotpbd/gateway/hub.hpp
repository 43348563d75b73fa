#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cobotpbd/gateway/protocol.hpp"
#include "cobotpbd/taskflow/commands.hpp"

namespace cobotpbd::gateway {

using taskflow::ClientId;

/// Transport-independent session logic: client registry, the teleop token,
/// per-sender seq tracking and translation of inbound messages to engine
/// commands. Thread-safe. Outbound messages go through each client's sink.
class Hub {
 public:
  using CommandSink = std::function<void(taskflow::Command)>;
  using MessageSink = std::function<void(const Message&)>;

  explicit Hub(CommandSink commands) : commands_(std::move(commands)) {}

  ClientId connect(MessageSink sink) {
    std::lock_guard lock(mutex_);
    const ClientId id = next_id_++;
    clients_[id] = Client{std::move(sink), {}, 0};
    return id;
  }

  /// Safety rule: losing the token holder stops teleoperation.
  void disconnect(ClientId id) {
    std::lock_guard lock(mutex_);
    clients_.erase(id);
    if (token_ == id) {
      token_.reset();
      commands_({id, taskflow::ClientLostCommand{}});
    }
  }

  std::optional<ClientId> token_holder() const {
    std::lock_guard lock(mutex_);
    return token_;
  }

  std::size_t client_count() const {
    std::lock_guard lock(mutex_);
    return clients_.size();
  }

  /// Feeds one decoded line (message or decode error) from a client.
  void handle(ClientId id, const DecodeResult& result) {
    if (const auto* d = std::get_if<Diagnostic>(&result)) {
      reply(id, {*d});
      return;
    }
    handle(id, std::get<Message>(result));
  }

  void handle(ClientId id, const Message& m) {
    std::vector<Diagnostic> replies;
    {
      std::lock_guard lock(mutex_);
      auto it = clients_.find(id);
      if (it == clients_.end()) return;
      if (auto gap = it->second.seq.observe(m.seq)) replies.push_back(*gap);
      if (auto err = route(id, m)) replies.push_back(*err);
    }
    if (!replies.empty()) reply(id, replies);
  }

  /// Sends to one client, or to all when id is kLocalClient.
  void send(ClientId id, MessageType type, const json& payload) {
    std::vector<std::pair<MessageSink, Message>> out;
    {
      std::lock_guard lock(mutex_);
      for (auto& [cid, c] : clients_) {
        if (id != taskflow::kLocalClient && cid != id) continue;
        out.emplace_back(c.sink, Message{type, ++c.out_seq, payload});
      }
    }
    for (auto& [sink, msg] : out) sink(msg);
  }

  void broadcast(MessageType type, const json& payload) { send(taskflow::kLocalClient, type, payload); }

  void reply(ClientId id, const std::vector<Diagnostic>& ds) {
    json arr = json::array();
    for (const auto& d : ds) arr.push_back(diagnostic_to_json(d));
    send(id, MessageType::diagnostics, {{"diagnostics", arr}});
  }

 private:
  struct Client {
    MessageSink sink;
    SeqTracker seq;
    std::uint64_t out_seq = 0;
  };

  static Diagnostic rejection(std::string code, std::string message) {
    return Diagnostic{Severity::error, std::move(code), "/type", std::move(message), 0};
  }

  // Caller holds mutex_.
  std::optional<Diagnostic> route(ClientId id, const Message& m) {
    if (!is_inbound(m.type)) return rejection("not-a-command", std::string("'") + to_string(m.type) + "' is engine-to-client only");
    const bool holder = token_ == id;
    if (token_ && !holder) return rejection("read-only", "another client holds the teleop token");

    taskflow::CommandBody body;
    try {
      body = to_command(m);
    } catch (const std::exception& e) {
      return rejection("invalid-payload", e.what());
    }

    if (m.type == MessageType::ctrl_pose && !holder) {
      return rejection("no-teleop-token", "ctrl_pose requires the teleop token; send mode_switch teleop first");
    }
    if (const auto* ms = std::get_if<taskflow::ModeSwitchCommand>(&body)) {
      if (ms->source == taskflow::ControlSource::teleop) {
        token_ = id;
      } else if (ms->source == taskflow::ControlSource::autonomous) {
        token_.reset();
      }
    }
    commands_({id, std::move(body)});
    return std::nullopt;
  }

  CommandSink commands_;
  mutable std::mutex mutex_;
  std::map<ClientId, Client> clients_;
  std::optional<ClientId> token_;
  ClientId next_id_ = 1;
};

}  // namespace cobotpbd::gateway
