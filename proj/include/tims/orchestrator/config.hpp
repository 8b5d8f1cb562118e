#pragma once

// Session configuration. The file format is flat TOML-style key/value:
//
//   setting = "HG"
//   [guidance]
//   threshold_um = 200
//
// Keys are addressed as "section.key". See docs/config.md.

#include "tims/analytics.hpp"
#include "tims/guidance.hpp"
#include "tims/orchestrator/operator.hpp"
#include "tims/tactile.hpp"
#include "tims/teleop.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tims {

/// Parsed key/value file. Values keep their literal text; typed getters
/// convert and report the key on failure.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::filesystem::path& file);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  std::vector<std::string> keys() const;
  void set(const std::string& key, const std::string& literal) { values_[key] = literal; }

 private:
  std::map<std::string, std::string> values_;
};

struct TaskConfig {
  int ticks_per_index = 8;       // follow-phase pace along the guide path
  int approach_ticks = 150;      // guide end -> hover above a clot
  int descent_ticks = 40;        // hover -> surface
  int dwell_ticks = 10;          // at the surface before pressing (no tactile cue)
  int contact_press_ticks = 3;   // after a felt contact, with tactile cue
  int max_probe_ticks = 60;      // extra descent when the tactile cue is still silent
  int lift_ticks = 30;
};

struct GuideSource {
  std::filesystem::path file;  // empty: synthesize expert demos and fit
  int demo_count = 10;
  int resample_count = 200;
  std::uint64_t demo_seed = 7;
  double clearance_um = 200.0;    // expert tool height above the vessel
  double demo_noise_um = 20.0;
};

struct SessionConfig {
  Setting setting = Setting::kHG;
  std::string trial_id;  // empty: derived from setting, seed and config hash
  MappingConfig mapping;
  GuidanceConfig guidance;
  SafetyBoundary safety;  // surface filled from the phantom
  TactileConfig tactile;
  OperatorConfig op;
  TaskConfig task;
  GuideSource guide;
  std::filesystem::path phantom_file;  // empty: built-in phantom
  double tick_hz = 100.0;
  std::filesystem::path log_dir;  // empty: do not persist

  void validate() const;
  /// Canonical text of every parameter; hashed into the log header.
  std::string canonical() const;
  std::string hash() const;
};

SessionConfig session_config_from(const KeyValueFile& kv);
SessionConfig load_session_config(const std::filesystem::path& file);

/// FNV-1a 64-bit, hex.
std::string fnv1a_hex(const std::string& text);

}  // namespace tims
