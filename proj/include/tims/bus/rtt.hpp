#pragma once

// Loopback latency probe: publish -> subscribe -> republish -> subscribe.

#include "tims/bus/broker.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace tims::bus {

/// Server-side echo: every envelope on `ping_device` is republished on
/// `pong_device` with the same payload after `delay`. Runs its own thread so
/// the delay never blocks the broker.
class EchoResponder {
 public:
  EchoResponder(Broker& broker, std::string ping_device, std::string pong_device,
                std::chrono::microseconds delay = std::chrono::microseconds(0));
  ~EchoResponder();
  EchoResponder(const EchoResponder&) = delete;
  EchoResponder& operator=(const EchoResponder&) = delete;

 private:
  Broker& broker_;
  std::string pong_device_;
  std::chrono::microseconds delay_;
  std::shared_ptr<QueueSubscriber> sub_;
  std::atomic<bool> stop_{false};
  std::thread worker_;
};

struct RttSummary {
  std::size_t requested = 0;
  std::size_t completed = 0;
  std::size_t timeouts = 0;
  std::vector<double> samples_ms;
  double min_ms = 0;
  double median_ms = 0;
  double p99_ms = 0;

  bool empty() const { return samples_ms.empty(); }
};

struct RttOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7450;
  std::string ping_device = "rtt.ping";
  std::string pong_device = "rtt.pong";
  std::chrono::milliseconds timeout{1000};
};

/// `n` echo round trips over a raw-TCP bus connection. Timed-out echoes are
/// counted and excluded from the statistics.
RttSummary measure_rtt(std::size_t n, const RttOptions& options = {});

/// min / median / p99 over the given samples (nearest-rank percentiles).
RttSummary summarize_rtt(std::vector<double> samples_ms);

}  // namespace tims::bus
