#pragma once

// Virtual eyeball phantom: sphere surface, vessel polyline, clot targets, the
// geometric tool-tissue contact oracle and the scene stepper.

#include "tims/geometry.hpp"
#include "tims/types.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tims {

struct NoTargetError : Error {
  explicit NoTargetError(const std::string& what) : Error("no-target", what) {}
};

struct Clot {
  Vec3 position = Vec3::Zero();
  double radius = 250.0;
  bool punctured = false;
};

struct Phantom {
  Sphere sphere;
  Path vessel;
  std::vector<Clot> clots;
  double contact_tolerance = 20.0;

  /// Throws ConfigError listing every offending vessel index / clot.
  void validate() const;
};

/// 24 mm eyeball centered at the origin with a 60 degree great-circle vessel
/// arc of `vessel_points` points and two 250 um clots on the vessel.
Phantom default_phantom(int vessel_points = 200);

Phantom load_phantom(const std::filesystem::path& file);
Phantom phantom_from_json_text(const std::string& text);
std::string phantom_to_json_text(const Phantom& phantom);

struct ContactState {
  bool touching = false;
  double penetration = 0.0;  // um
  Vec3 contact_point = Vec3::Zero();

  bool operator==(const ContactState&) const = default;
};

/// Exact signed-distance test against the sphere. Throws
/// DegenerateNormalError for a tip at the exact center.
ContactState contact_query(const Vec3& tool_tip, const Phantom& phantom);

/// Pluggable contact source. The geometric oracle is the only shipped
/// implementation; a learned estimator would slot in here.
class ContactEstimator {
 public:
  virtual ~ContactEstimator() = default;
  virtual ContactState estimate(const Vec3& tool_tip, const Phantom& phantom) const = 0;
};

class GeometricContactEstimator final : public ContactEstimator {
 public:
  ContactState estimate(const Vec3& tool_tip, const Phantom& phantom) const override {
    return contact_query(tool_tip, phantom);
  }
};

struct InsertionResult {
  std::optional<std::size_t> hit;
  std::size_t target = 0;     // nearest unpunctured clot at the time of the attempt
  double miss_distance = 0.0;  // tip to clot center, um
};

/// Target the nearest unpunctured clot (lowest index on ties); mark it
/// punctured when the tip is within its radius.
InsertionResult attempt_insertion(const Vec3& tool_tip, Phantom& phantom);

struct SceneFrame {
  Vec3 tool_tip = Vec3::Zero();
  ContactState contact;
  std::vector<bool> clot_states;
  std::uint64_t frame_seq = 0;
  std::int64_t timestamp_ms = 0;

  bool operator==(const SceneFrame&) const = default;
};

struct SceneState {
  Phantom phantom;
  std::shared_ptr<const ContactEstimator> estimator = std::make_shared<GeometricContactEstimator>();
  std::uint64_t frame_seq = 0;
  std::int64_t timestamp_ms = 0;
  ContactState last_contact;
};

/// Deterministic: identical input sequences give identical frames.
SceneFrame step_scene(SceneState& state, const Vec3& follower_position, std::int64_t dt_ms);

}  // namespace tims
