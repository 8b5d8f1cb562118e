#include "tims/bus/broker.hpp"

#include <algorithm>

namespace tims::bus {

void QueueSubscriber::deliver(const Envelope& env) {
  std::function<void()> notify;
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      overflow_.fetch_add(1);
    }
    queue_.push_back(env);
    notify = notify_;
  }
  cv_.notify_one();
  if (notify) notify();
}

std::optional<Envelope> QueueSubscriber::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; })) return std::nullopt;
  if (queue_.empty()) return std::nullopt;
  Envelope env = std::move(queue_.front());
  queue_.pop_front();
  return env;
}

std::optional<Envelope> QueueSubscriber::try_pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  Envelope env = std::move(queue_.front());
  queue_.pop_front();
  return env;
}

void QueueSubscriber::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool QueueSubscriber::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::size_t QueueSubscriber::size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

void QueueSubscriber::set_notify(std::function<void()> fn) {
  std::lock_guard lock(mu_);
  notify_ = std::move(fn);
}

Broker::Broker(std::shared_ptr<const Clock> clock, const SchemaRegistry* schemas)
    : clock_(std::move(clock)), schemas_(schemas) {}

Broker::Channel& Broker::channel(const std::string& device) {
  {
    std::shared_lock lock(map_mu_);
    const auto it = channels_.find(device);
    if (it != channels_.end()) return *it->second;
  }
  std::unique_lock lock(map_mu_);
  auto& slot = channels_[device];
  if (!slot) {
    slot = std::make_unique<Channel>();
    slot->subscribers = wildcard_;
  }
  return *slot;
}

PublishAck Broker::publish(const Envelope& env) {
  if (env.device_id.empty() || env.device_id == kAllDevices) {
    rejected_.fetch_add(1);
    throw SchemaError("envelope.device: must be a non-empty device id other than '*'");
  }
  if (schemas_) {
    try {
      schemas_->validate(env);
    } catch (const SchemaError&) {
      rejected_.fetch_add(1);
      throw;
    }
  }
  Channel& ch = channel(env.device_id);
  std::lock_guard lock(ch.mu);
  if (ch.latest && env.seq <= ch.latest->seq) {
    stale_.fetch_add(1);
    return {PublishStatus::kStale, env.device_id, env.seq};
  }
  ch.latest = env;
  {
    std::lock_guard sink_lock(sink_mu_);
    const std::int64_t rx = clock_->now_ms();
    for (const auto& s : sinks_) s->record(rx, env);
  }
  for (const auto& sub : ch.subscribers) sub->deliver(env);
  accepted_.fetch_add(1);
  return {PublishStatus::kAccepted, env.device_id, env.seq};
}

void Broker::subscribe(const std::string& device, std::shared_ptr<Subscriber> sub) {
  if (device == kAllDevices) {
    std::unique_lock map_lock(map_mu_);
    wildcard_.push_back(sub);
    for (auto& [_, ch] : channels_) {
      std::lock_guard lock(ch->mu);
      ch->subscribers.push_back(sub);
      if (ch->latest) sub->deliver(*ch->latest);
    }
    return;
  }
  Channel& ch = channel(device);
  std::lock_guard lock(ch.mu);
  ch.subscribers.push_back(sub);
  if (ch.latest) sub->deliver(*ch.latest);
}

std::shared_ptr<QueueSubscriber> Broker::subscribe_queue(const std::string& device, std::size_t capacity) {
  auto sub = std::make_shared<QueueSubscriber>(capacity);
  subscribe(device, sub);
  return sub;
}

std::shared_ptr<Subscriber> Broker::subscribe_callback(const std::string& device,
                                                       std::function<void(const Envelope&)> fn) {
  auto sub = std::make_shared<CallbackSubscriber>(std::move(fn));
  subscribe(device, sub);
  return sub;
}

void Broker::unsubscribe(const std::shared_ptr<Subscriber>& sub) {
  std::unique_lock map_lock(map_mu_);
  std::erase(wildcard_, sub);
  for (auto& [_, ch] : channels_) {
    std::lock_guard lock(ch->mu);
    std::erase(ch->subscribers, sub);
  }
}

std::optional<Envelope> Broker::latest(const std::string& device) const {
  std::shared_lock map_lock(map_mu_);
  const auto it = channels_.find(device);
  if (it == channels_.end()) return std::nullopt;
  std::lock_guard lock(it->second->mu);
  return it->second->latest;
}

std::map<std::string, Envelope> Broker::latest_snapshot() const {
  std::map<std::string, Envelope> out;
  std::shared_lock map_lock(map_mu_);
  for (const auto& [name, ch] : channels_) {
    std::lock_guard lock(ch->mu);
    if (ch->latest) out.emplace(name, *ch->latest);
  }
  return out;
}

void Broker::add_sink(std::shared_ptr<PublishSink> sink) {
  std::lock_guard lock(sink_mu_);
  sinks_.push_back(std::move(sink));
}

void Broker::remove_sink(const std::shared_ptr<PublishSink>& sink) {
  std::lock_guard lock(sink_mu_);
  std::erase(sinks_, sink);
}

BrokerStats Broker::stats() const { return {accepted_.load(), stale_.load(), rejected_.load()}; }

}  // namespace tims::bus
