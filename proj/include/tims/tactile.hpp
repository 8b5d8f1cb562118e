#pragma once

// Wearable tactile display model: 4x4 pneumatic actuators driven together by
// the contact boolean with first-order inflate/deflate dynamics.

#include "tims/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace tims {

struct TactileConfig {
  double tau_inflate_ms = 80.0;   // placeholder pneumatic constants
  double tau_deflate_ms = 120.0;

  void validate() const {
    if (!(tau_inflate_ms > 0) || !(tau_deflate_ms > 0)) throw ConfigError("tactile time constants must be > 0");
  }
};

struct TactileFrame {
  static constexpr int kRows = 4;
  static constexpr int kCols = 4;

  std::array<double, kRows * kCols> actuators{};  // levels in [0,1]
  bool commanded = false;
  std::int64_t timestamp_ms = 0;

  double level() const { return actuators[0]; }
  bool operator==(const TactileFrame&) const = default;
};

/// Exact step of the first-order response toward 1 (touching) or 0.
inline TactileFrame update_tactile(const TactileFrame& prev, bool touching, double dt_ms,
                                   const TactileConfig& cfg = {}) {
  if (!(dt_ms > 0)) throw ValidationError("update_tactile: dt_ms must be positive");
  const double target = touching ? 1.0 : 0.0;
  const double decay = std::exp(-dt_ms / (touching ? cfg.tau_inflate_ms : cfg.tau_deflate_ms));
  TactileFrame next = prev;
  for (auto& a : next.actuators) a = std::clamp(target + (a - target) * decay, 0.0, 1.0);
  next.commanded = touching;
  next.timestamp_ms = prev.timestamp_ms + static_cast<std::int64_t>(std::llround(dt_ms));
  return next;
}

}  // namespace tims
