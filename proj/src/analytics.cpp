#include "tims/analytics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

namespace tims {

using bus::json;

std::string to_string(Setting s) {
  switch (s) {
    case Setting::kNF: return "NF";
    case Setting::kTF: return "TF";
    case Setting::kHG: return "HG";
    case Setting::kTF_HG: return "TF_HG";
  }
  return "NF";
}

Setting setting_from_string(const std::string& s) {
  if (s == "NF") return Setting::kNF;
  if (s == "TF") return Setting::kTF;
  if (s == "HG") return Setting::kHG;
  if (s == "TF_HG" || s == "TF&HG") return Setting::kTF_HG;
  throw ConfigError("unknown setting '" + s + "' (expected NF, TF, HG or TF_HG)");
}

double TrialMetrics::mean_insertion_error_um() const {
  if (insertion_errors_um.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(insertion_errors_um.begin(), insertion_errors_um.end(), 0.0) /
         static_cast<double>(insertion_errors_um.size());
}

json metrics_to_json(const TrialMetrics& m) {
  const auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"trial_id", m.trial_id},
              {"setting", to_string(m.setting)},
              {"time_cost_s", num(m.time_cost_s)},
              {"trajectory_rmse_um", num(m.trajectory_rmse_um)},
              {"insertion_errors_um", m.insertion_errors_um},
              {"reminder_count", m.reminder_count}};
}

TrialMetrics metrics_from_json(const json& j) {
  const auto num = [&](const char* k) {
    const auto& v = j.at(k);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  TrialMetrics m;
  m.trial_id = j.at("trial_id").get<std::string>();
  m.setting = setting_from_string(j.at("setting").get<std::string>());
  m.time_cost_s = num("time_cost_s");
  m.trajectory_rmse_um = num("trajectory_rmse_um");
  m.insertion_errors_um = j.at("insertion_errors_um").get<std::vector<double>>();
  m.reminder_count = j.at("reminder_count").get<int>();
  return m;
}

std::optional<SettingSummary> Summary::get(Setting s) const {
  const auto it = per_setting.find(s);
  if (it == per_setting.end()) return std::nullopt;
  return it->second;
}

std::vector<double> rolling_mean(const std::vector<double>& values, int window) {
  if (window < 1) throw ConfigError("rolling mean window must be >= 1");
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - static_cast<std::size_t>(window) : 0;
    double acc = 0;
    for (std::size_t k = lo; k <= i; ++k) acc += values[k];
    out.push_back(acc / static_cast<double>(i - lo + 1));
  }
  return out;
}

Summary summarize(const std::vector<TrialMetrics>& trials, int window) {
  Summary s;
  for (const auto& t : trials) {
    auto& agg = s.per_setting[t.setting];
    ++agg.trials;
    agg.time_cost_s += t.time_cost_s;
    agg.trajectory_rmse_um += t.trajectory_rmse_um;
    agg.insertion_error_um += t.mean_insertion_error_um();
    agg.reminder_count += t.reminder_count;
  }
  for (auto& [_, agg] : s.per_setting) {
    const double n = static_cast<double>(agg.trials);
    agg.time_cost_s /= n;
    agg.trajectory_rmse_um /= n;
    agg.insertion_error_um /= n;
    agg.reminder_count /= n;
  }
  s.curve.trials = trials;
  s.curve.window = window;
  std::vector<double> rmse, ins;
  for (const auto& t : trials) {
    rmse.push_back(t.trajectory_rmse_um);
    ins.push_back(t.mean_insertion_error_um());
  }
  s.curve.rolling_rmse_um = rolling_mean(rmse, window);
  s.curve.rolling_insertion_um = rolling_mean(ins, window);
  return s;
}

std::string metrics_csv(const std::vector<TrialMetrics>& trials) {
  std::ostringstream os;
  os.precision(17);
  os << "trial,setting,rmse_um,insertion_um,time_s,reminders\n";
  for (const auto& t : trials)
    os << t.trial_id << ',' << to_string(t.setting) << ',' << t.trajectory_rmse_um << ','
       << t.mean_insertion_error_um() << ',' << t.time_cost_s << ',' << t.reminder_count << '\n';
  return os.str();
}

namespace {

Vec3 vec_of(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void MetricsCollector::consume(const bus::Envelope& env) {
  last_ms_ = std::max(last_ms_, env.timestamp_ms);
  const auto& p = env.payload;
  if (env.device_id == "guide") {
    guide_ = {};
    for (const auto& q : p.at("points")) guide_.points.push_back(vec_of(q));
    for (const auto& q : p.at("ci")) guide_.ci_halfwidth.push_back(vec_of(q));
  } else if (env.device_id == "event") {
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "session_start") {
      trial_id_ = p.value("trial_id", "");
      setting_ = setting_from_string(p.value("setting", "NF"));
    } else if (kind == "phase") {
      following_ = p.value("phase", "") == "follow";
    } else if (kind == "insertion") {
      const Vec3 tip = vec_of(p.at("tip_um"));
      const Vec3 target = vec_of(p.at("target_um"));
      final_insertion_[p.at("target").get<std::size_t>()] = insertion_error(tip, target);
    } else if (kind == "complete") {
      if (!complete_ms_) complete_ms_ = env.timestamp_ms;
    }
  } else if (env.device_id == "leader") {
    if (!engaged_ms_ && p.value("pedal", false)) engaged_ms_ = env.timestamp_ms;
  } else if (env.device_id == "follower") {
    if (following_) executed_.push_back(vec_of(p.at("pos_um")));
  } else if (env.device_id == "haptic") {
    reminders_.update(p.value("violated", false));
  }
}

TrialMetrics MetricsCollector::metrics() const {
  TrialMetrics m;
  m.trial_id = trial_id_;
  m.setting = setting_;
  if (engaged_ms_) m.time_cost_s = static_cast<double>(complete_ms_.value_or(last_ms_) - *engaged_ms_) / 1000.0;
  m.trajectory_rmse_um = (executed_.empty() || guide_.empty()) ? std::numeric_limits<double>::quiet_NaN()
                                                               : trajectory_rmse(executed_, guide_.points);
  for (const auto& [_, e] : final_insertion_) m.insertion_errors_um.push_back(e);
  m.reminder_count = reminders_.count();
  return m;
}

}  // namespace tims
