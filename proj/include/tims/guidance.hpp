#pragma once

// Haptic guidance: nearest-point queries against the guide path, the
// threshold-gated restoring force and the safety-boundary virtual fixture.

#include "tims/geometry.hpp"
#include "tims/gpr.hpp"
#include "tims/types.hpp"

#include <algorithm>
#include <cstddef>
#include <string>

namespace tims {

enum class ProgressMode { kFullScan, kMonotone };

/// kRestoring pushes toward the path (d - p). kLiteral uses p - d for
/// devices whose force convention is inverted.
enum class SignConvention { kRestoring, kLiteral };

template <typename Scalar>
struct GuidanceConfigT {
  Scalar deviation_threshold = Scalar(200);  // um
  Scalar force_gain = Scalar(5e-4);          // N/um
  Scalar max_force = Scalar(3.0);            // N
  ProgressMode progress_mode = ProgressMode::kFullScan;
  SignConvention sign = SignConvention::kRestoring;

  void validate() const {
    if (!(deviation_threshold >= 0)) throw ConfigError("guidance.threshold_um must be >= 0");
    if (!(force_gain > 0)) throw ConfigError("guidance.gain must be > 0");
    if (!(max_force > 0)) throw ConfigError("guidance.max_force_n must be > 0");
  }
};

using GuidanceConfig = GuidanceConfigT<double>;

template <typename Scalar>
struct NearestT {
  Vec3T<Scalar> point;
  std::size_t index = 0;
  Scalar distance = 0;
};

using Nearest = NearestT<double>;

/// Closest path point to `p`; ties go to the lowest index. In monotone mode
/// the search starts at `cursor`, and the caller advances its cursor to the
/// returned index.
template <typename Scalar>
NearestT<Scalar> nearest_point(const Vec3T<Scalar>& p, const PathT<Scalar>& path, std::size_t cursor = 0,
                               ProgressMode mode = ProgressMode::kFullScan) {
  if (path.empty()) throw ConfigError("nearest_point: guide path is empty");
  std::size_t begin = 0;
  if (mode == ProgressMode::kMonotone) {
    if (cursor >= path.size()) throw ConfigError("nearest_point: cursor out of range");
    begin = cursor;
  }
  std::size_t best = begin;
  Scalar best_sq = (path[begin] - p).squaredNorm();
  for (std::size_t i = begin + 1; i < path.size(); ++i) {
    const Scalar sq = (path[i] - p).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  return {path[best], best, std::sqrt(best_sq)};
}

template <typename Scalar>
struct ForceCommandT {
  Vec3T<Scalar> force = Vec3T<Scalar>::Zero();  // N
  std::size_t nearest_index = 0;
  Scalar deviation = 0;  // um
};

using ForceCommand = ForceCommandT<double>;

/// Scale `f` down to `cap` if it is longer, keeping its direction.
template <typename Scalar>
Vec3T<Scalar> clamp_norm(const Vec3T<Scalar>& f, Scalar cap) {
  const Scalar n = f.norm();
  return n > cap ? Vec3T<Scalar>(f * (cap / n)) : f;
}

template <typename Scalar>
ForceCommandT<Scalar> guidance_force(const Vec3T<Scalar>& p, const PathT<Scalar>& path,
                                     const GuidanceConfigT<Scalar>& cfg, std::size_t cursor = 0) {
  const auto near = nearest_point(p, path, cursor, cfg.progress_mode);
  ForceCommandT<Scalar> out;
  out.nearest_index = near.index;
  out.deviation = near.distance;
  if (near.distance <= cfg.deviation_threshold) return out;
  const Vec3T<Scalar> toward = near.point - p;
  const Vec3T<Scalar> raw = cfg.force_gain * (cfg.sign == SignConvention::kRestoring ? toward : Vec3T<Scalar>(-toward));
  out.force = clamp_norm(raw, cfg.max_force);
  return out;
}

template <typename Scalar>
struct SafetyBoundaryT {
  SphereT<Scalar> surface;
  Scalar penetration_limit = Scalar(150);  // um
  Scalar fixture_gain = Scalar(1e-3);      // N/um

  void validate() const {
    if (!(penetration_limit > 0)) throw ConfigError("safety.penetration_limit_um must be > 0");
    if (!(fixture_gain >= 0)) throw ConfigError("safety.fixture_gain must be >= 0");
  }
};

using SafetyBoundary = SafetyBoundaryT<double>;

template <typename Scalar>
struct FixtureResultT {
  Vec3T<Scalar> force = Vec3T<Scalar>::Zero();
  bool violated = false;
};

using FixtureResult = FixtureResultT<double>;

/// Outward push proportional to penetration beyond the limit (inclusive
/// boundary: exactly at the limit is not a violation). A tip at the exact
/// sphere center is violated with no defined push direction.
template <typename Scalar>
FixtureResultT<Scalar> fixture_force(const Vec3T<Scalar>& p, const SafetyBoundaryT<Scalar>& boundary) {
  FixtureResultT<Scalar> out;
  const Vec3T<Scalar> r = p - boundary.surface.center;
  const Scalar dist = r.norm();
  const Scalar penetration = std::max(Scalar(0), boundary.surface.radius - dist);
  if (penetration <= boundary.penetration_limit) return out;
  out.violated = true;
  if (dist > Scalar(0)) out.force = boundary.fixture_gain * (penetration - boundary.penetration_limit) * (r / dist);
  return out;
}

/// Guidance plus fixture, capped last.
template <typename Scalar>
Vec3T<Scalar> total_force(const Vec3T<Scalar>& guidance, const Vec3T<Scalar>& fixture, Scalar max_force) {
  return clamp_norm<Scalar>(guidance + fixture, max_force);
}

/// Counts violation episodes: one reminder per rising edge.
class ReminderCounter {
 public:
  bool update(bool violated) {
    const bool rising = violated && !last_;
    last_ = violated;
    if (rising) ++count_;
    return rising;
  }
  int count() const { return count_; }

 private:
  bool last_ = false;
  int count_ = 0;
};

}  // namespace tims
