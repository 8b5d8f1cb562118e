#pragma once

// Skill analytics: per-trial metrics and cross-trial summaries.

#include "tims/bus/envelope.hpp"
#include "tims/gpr.hpp"
#include "tims/guidance.hpp"
#include "tims/types.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tims {

struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& what) : Error("undefined-metric", what) {}
};

enum class Setting { kNF, kTF, kHG, kTF_HG };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);
inline bool tactile_active(Setting s) { return s == Setting::kTF || s == Setting::kTF_HG; }
inline bool guidance_active(Setting s) { return s == Setting::kHG || s == Setting::kTF_HG; }

/// RMS distance from each executed point to its nearest guide point.
template <typename Scalar>
Scalar trajectory_rmse(const PathT<Scalar>& executed, const PathT<Scalar>& guide) {
  if (executed.empty()) throw UndefinedMetricError("trajectory_rmse: executed trajectory is empty");
  Scalar acc = 0;
  for (const auto& p : executed) {
    const Scalar d = nearest_point(p, guide).distance;
    acc += d * d;
  }
  return std::sqrt(acc / Scalar(executed.size()));
}

template <typename Scalar>
Scalar insertion_error(const Vec3T<Scalar>& attempt, const Vec3T<Scalar>& target) {
  return (attempt - target).norm();
}

struct TrialMetrics {
  std::string trial_id;
  Setting setting = Setting::kNF;
  double time_cost_s = 0;
  double trajectory_rmse_um = 0;
  std::vector<double> insertion_errors_um;  // one per target, final attempt
  int reminder_count = 0;

  double mean_insertion_error_um() const;
  bool operator==(const TrialMetrics&) const = default;
};

bus::json metrics_to_json(const TrialMetrics& m);
TrialMetrics metrics_from_json(const bus::json& j);

struct SettingSummary {
  std::size_t trials = 0;
  double time_cost_s = 0;
  double trajectory_rmse_um = 0;
  double insertion_error_um = 0;
  double reminder_count = 0;
};

struct LearningCurve {
  std::vector<TrialMetrics> trials;  // chronological
  int window = 3;
  std::vector<double> rolling_rmse_um;
  std::vector<double> rolling_insertion_um;
};

struct Summary {
  std::map<Setting, SettingSummary> per_setting;  // settings with no trials are absent
  LearningCurve curve;

  std::optional<SettingSummary> get(Setting s) const;
};

/// Rolling mean over the trailing `window` values (shorter at the start).
std::vector<double> rolling_mean(const std::vector<double>& values, int window);

Summary summarize(const std::vector<TrialMetrics>& trials, int window = 3);

/// Plot-data CSV: trial,setting,rmse_um,insertion_um,time_s,reminders
std::string metrics_csv(const std::vector<TrialMetrics>& trials);

/// Rebuilds TrialMetrics from the envelope stream of one trial. Feeding the
/// live stream and a replay of its log yields identical results.
///
/// Uses: the `guide` envelope (guide path), `event` envelopes
/// (session_start/phase/insertion/complete), `leader` pedal state (start of
/// the time cost), `follower` positions during the follow phase (RMSE), and
/// the `haptic` violated flag (reminders, one per rising edge).
class MetricsCollector {
 public:
  void consume(const bus::Envelope& env);
  TrialMetrics metrics() const;

 private:
  std::string trial_id_;
  Setting setting_ = Setting::kNF;
  GuidePath guide_;
  Path executed_;
  bool following_ = false;
  std::optional<std::int64_t> engaged_ms_;
  std::optional<std::int64_t> complete_ms_;
  std::int64_t last_ms_ = 0;
  std::map<std::size_t, double> final_insertion_;
  ReminderCounter reminders_;
};

}  // namespace tims
