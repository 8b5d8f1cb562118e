#pragma once

// In-process broker: schema check, stale-seq drop, latest-value store,
// session recording and per-device FIFO fan-out.

#include "tims/bus/envelope.hpp"
#include "tims/bus/schema.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace tims::bus {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

class SteadyClock final : public Clock {
 public:
  std::int64_t now_ms() const override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

/// Set explicitly by a simulation loop; makes recorded logs reproducible.
class ManualClock final : public Clock {
 public:
  std::int64_t now_ms() const override { return now_.load(); }
  void set(std::int64_t t) { now_.store(t); }

 private:
  std::atomic<std::int64_t> now_{0};
};

/// Receives envelopes in per-device order. `deliver` runs on the publishing
/// thread while the device is locked, so it must not block.
class Subscriber {
 public:
  virtual ~Subscriber() = default;
  virtual void deliver(const Envelope& env) = 0;
};

class CallbackSubscriber final : public Subscriber {
 public:
  explicit CallbackSubscriber(std::function<void(const Envelope&)> fn) : fn_(std::move(fn)) {}
  void deliver(const Envelope& env) override { fn_(env); }

 private:
  std::function<void(const Envelope&)> fn_;
};

/// Bounded mailbox; on overflow the oldest entry is dropped and counted.
class QueueSubscriber final : public Subscriber {
 public:
  explicit QueueSubscriber(std::size_t capacity = 1024) : capacity_(capacity) {}

  void deliver(const Envelope& env) override;
  std::optional<Envelope> pop(std::chrono::milliseconds timeout);
  std::optional<Envelope> try_pop();
  void close();
  bool closed() const;
  std::uint64_t overflow_count() const { return overflow_.load(); }
  std::size_t size() const;

  /// Called after each enqueue (outside the queue lock). Must not block.
  void set_notify(std::function<void()> fn);

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Envelope> queue_;
  bool closed_ = false;
  std::function<void()> notify_;
  std::atomic<std::uint64_t> overflow_{0};
};

/// Passive observer of every accepted publish, called with the receive time.
/// Used by the session recorder.
class PublishSink {
 public:
  virtual ~PublishSink() = default;
  virtual void record(std::int64_t rx_ms, const Envelope& env) = 0;
};

enum class PublishStatus { kAccepted, kStale };

struct PublishAck {
  PublishStatus status = PublishStatus::kAccepted;
  std::string device_id;
  std::uint64_t seq = 0;
};

struct BrokerStats {
  std::uint64_t accepted = 0;
  std::uint64_t stale = 0;
  std::uint64_t rejected = 0;
};

class Broker {
 public:
  static constexpr const char* kAllDevices = "*";

  explicit Broker(std::shared_ptr<const Clock> clock = std::make_shared<SteadyClock>(),
                  const SchemaRegistry* schemas = &SchemaRegistry::builtin());

  /// Throws SchemaError on a payload violation. Stale seqs (<= stored) are
  /// dropped and counted, not thrown.
  PublishAck publish(const Envelope& env);

  /// Late subscribers first receive the stored latest envelope. `device` may
  /// be "*" for every device, including ones that appear later.
  void subscribe(const std::string& device, std::shared_ptr<Subscriber> sub);
  std::shared_ptr<QueueSubscriber> subscribe_queue(const std::string& device, std::size_t capacity = 1024);
  std::shared_ptr<Subscriber> subscribe_callback(const std::string& device, std::function<void(const Envelope&)> fn);
  void unsubscribe(const std::shared_ptr<Subscriber>& sub);

  std::optional<Envelope> latest(const std::string& device) const;
  std::map<std::string, Envelope> latest_snapshot() const;

  void add_sink(std::shared_ptr<PublishSink> sink);
  void remove_sink(const std::shared_ptr<PublishSink>& sink);

  BrokerStats stats() const;
  const Clock& clock() const { return *clock_; }

 private:
  struct Channel {
    std::mutex mu;
    std::optional<Envelope> latest;
    std::vector<std::shared_ptr<Subscriber>> subscribers;
  };

  Channel& channel(const std::string& device);

  std::shared_ptr<const Clock> clock_;
  const SchemaRegistry* schemas_;

  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::unique_ptr<Channel>> channels_;
  std::vector<std::shared_ptr<Subscriber>> wildcard_;

  std::mutex sink_mu_;
  std::vector<std::shared_ptr<PublishSink>> sinks_;

  std::atomic<std::uint64_t> accepted_{0};
  std::atomic<std::uint64_t> stale_{0};
  std::atomic<std::uint64_t> rejected_{0};
};

}  // namespace tims::bus
