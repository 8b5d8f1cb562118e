#pragma once

// Live sessions behind `tims serve`: the `/session/*` endpoints start and
// stop a trial that runs in wall time on the shared broker. Human sessions
// take leader samples from the bus (the console publishes them); scripted
// ones play the task script at the configured tick rate.

#include "tims/bus/transport.hpp"
#include "tims/orchestrator/config.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <thread>

namespace tims {

class LiveSessionService final : public bus::SessionService {
 public:
  /// `defaults` supplies every key the start request leaves out.
  LiveSessionService(bus::Broker& broker, KeyValueFile defaults = {});
  ~LiveSessionService() override;

  /// Request: {"config": {"setting": "HG", "operator.kind": "human", ...}}
  /// with keys as in the config file. Throws ConfigError / Error("busy").
  bus::json start(const bus::json& request) override;
  bus::json stop() override;
  bus::json state() override;
  bus::json metrics() override;

  /// Blocks until the running session (if any) ends on its own.
  void wait();

 private:
  struct Run;
  void finish_locked();
  static bus::json describe(Run& run);

  bus::Broker& broker_;
  KeyValueFile defaults_;
  std::mutex mu_;
  std::shared_ptr<Run> run_;
};

/// Literal text for a JSON value as it would appear in a config file.
std::string config_literal(const bus::json& value);

}  // namespace tims
