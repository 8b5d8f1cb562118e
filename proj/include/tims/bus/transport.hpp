#pragma once

// Network face of the broker.
//
// Raw TCP (bus port): every message is a frame = 4-byte big-endian length +
// UTF-8 JSON. HTTP (http port): `/bus` upgrades to a WebSocket carrying the
// same JSON messages as text frames; `/session/*` are JSON endpoints; other
// GETs serve static console assets.
//
// Client -> server:
//   {"op":"publish","env":{...},"ack":true}
//   {"op":"subscribe","device":"leader"}      ("*" for every device)
//   {"op":"unsubscribe","device":"leader"}
// Server -> client:
//   {"op":"ack","device":..,"seq":..,"status":"accepted"|"stale"}
//   {"op":"ack","device":..,"status":"subscribed"|"unsubscribed"}
//   {"op":"deliver","env":{...}}
//   {"op":"error","kind":..,"message":..}

#include "tims/bus/broker.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace tims::bus {

/// Backs the `/session/*` HTTP endpoints. Implementations must be
/// thread-safe; they are called from I/O threads.
class SessionService {
 public:
  virtual ~SessionService() = default;
  virtual json state() = 0;
  virtual json start(const json& request) = 0;
  virtual json stop() = 0;
  virtual json metrics() = 0;
};

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t bus_port = 7450;   // 0 picks an ephemeral port
  std::uint16_t http_port = 7451;  // 0 picks an ephemeral port
  std::filesystem::path web_root;  // static assets; empty disables
  std::size_t queue_capacity = 1024;
  int io_threads = 2;
};

/// Fills ports from TIMS_BUS_PORT / TIMS_HTTP_PORT when set.
ServerOptions server_options_from_env(ServerOptions base = {});

/// Shared message handling for one client connection, independent of the
/// framing. Replies go through `send_text`.
class ProtocolHandler {
 public:
  ProtocolHandler(Broker& broker, std::size_t queue_capacity) : broker_(broker), capacity_(queue_capacity) {}
  virtual ~ProtocolHandler() { drop_subscriptions(); }

  void handle_text(const std::string& text);
  void drop_subscriptions();

 protected:
  virtual void send_text(std::string text) = 0;
  /// Schedule `fn` on the connection's serialized executor.
  virtual void post(std::function<void()> fn) = 0;

 private:
  void drain(const std::shared_ptr<QueueSubscriber>& sub);

  Broker& broker_;
  std::size_t capacity_;
  std::mutex mu_;
  std::vector<std::pair<std::string, std::shared_ptr<QueueSubscriber>>> subs_;
};

class BusServer {
 public:
  BusServer(Broker& broker, ServerOptions options, std::shared_ptr<SessionService> service = nullptr);
  ~BusServer();
  BusServer(const BusServer&) = delete;
  BusServer& operator=(const BusServer&) = delete;

  void start();
  void stop();
  std::uint16_t bus_port() const;
  std::uint16_t http_port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking raw-TCP client with a background reader.
class BusClient {
 public:
  BusClient();
  ~BusClient();
  BusClient(const BusClient&) = delete;
  BusClient& operator=(const BusClient&) = delete;

  void connect(const std::string& host, std::uint16_t port);
  void close();

  void publish(const Envelope& env, bool want_ack = false);
  void subscribe(const std::string& device);
  void send(const json& message);

  /// Next server message, or nullopt on timeout / closed connection.
  std::optional<json> receive(std::chrono::milliseconds timeout);
  /// Next `deliver` message's envelope, skipping acks.
  std::optional<Envelope> receive_envelope(std::chrono::milliseconds timeout);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tims::bus
