#include "tims/bus/rtt.hpp"

#include "tims/bus/transport.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace tims::bus {

EchoResponder::EchoResponder(Broker& broker, std::string ping_device, std::string pong_device,
                             std::chrono::microseconds delay)
    : broker_(broker), pong_device_(std::move(pong_device)), delay_(delay) {
  sub_ = broker_.subscribe_queue(ping_device, 4096);
  // The stored latest ping is delivered on subscribe; it was already echoed.
  const auto stale = broker_.latest(ping_device);
  worker_ = std::thread([this, stale] {
    std::uint64_t next_seq = broker_.latest(pong_device_).value_or(Envelope{}).seq + 1;
    while (!stop_.load()) {
      auto env = sub_->pop(std::chrono::milliseconds(50));
      if (!env) continue;
      if (stale && env->seq == stale->seq) continue;
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      Envelope pong = *env;
      pong.device_id = pong_device_;
      pong.seq = next_seq++;
      broker_.publish(pong);
    }
  });
}

EchoResponder::~EchoResponder() {
  stop_.store(true);
  sub_->close();
  worker_.join();
  broker_.unsubscribe(sub_);
}

RttSummary summarize_rtt(std::vector<double> samples) {
  RttSummary s;
  s.completed = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  const auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
    return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
  };
  s.min_ms = samples.front();
  const std::size_t n = samples.size();
  s.median_ms = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  s.p99_ms = rank(0.99);
  s.samples_ms = std::move(samples);
  return s;
}

RttSummary measure_rtt(std::size_t n, const RttOptions& options) {
  if (n == 0) return {};
  BusClient client;
  client.connect(options.host, options.port);
  client.subscribe(options.ping_device);
  client.subscribe(options.pong_device);

  // Learn the current seqs from the late-subscriber replay of the latest
  // envelopes (if any), so the pings are never stale.
  std::uint64_t ping_seq = 0;
  while (auto env = client.receive_envelope(std::chrono::milliseconds(100)))
    if (env->device_id == options.ping_device) ping_seq = std::max(ping_seq, env->seq);

  std::vector<double> samples;
  samples.reserve(n);
  std::size_t timeouts = 0;
  const auto epoch = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < n; ++i) {
    Envelope ping;
    ping.device_id = options.ping_device;
    ping.seq = ++ping_seq;
    const auto t0 = std::chrono::steady_clock::now();
    ping.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t0 - epoch).count();
    ping.payload = json{{"probe", ping.seq}};
    client.publish(ping);
    bool done = false;
    while (!done) {
      const auto left = options.timeout - std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
      if (left.count() <= 0) break;
      auto env = client.receive_envelope(left);
      if (!env) break;
      if (env->device_id == options.pong_device && env->payload.value("probe", std::uint64_t{0}) == ping.seq) done = true;
    }
    if (done) {
      samples.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    } else {
      ++timeouts;
      std::cerr << "warning: rtt probe " << ping.seq << " timed out\n";
    }
  }
  auto summary = summarize_rtt(std::move(samples));
  summary.requested = n;
  summary.timeouts = timeouts;
  return summary;
}

}  // namespace tims::bus
