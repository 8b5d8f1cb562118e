#include "oracles.hpp"
#include "tims/analytics.hpp"

#include <doctest.h>

#include <random>

using namespace tims;
using bus::Envelope;
using bus::json;

namespace {

Path straight(int n, double step) {
  Path p;
  for (int i = 0; i < n; ++i) p.emplace_back(0.0, step * i, 0.0);
  return p;
}

long double brute_rmse(const Path& exec, const Path& guide) {
  long double acc = 0;
  for (const auto& e : exec) {
    long double best = -1;
    for (const auto& g : guide) {
      long double d2 = 0;
      for (int a = 0; a < 3; ++a) {
        const long double dl = static_cast<long double>(e(a)) - g(a);
        d2 += dl * dl;
      }
      if (best < 0 || d2 < best) best = d2;
    }
    acc += best;
  }
  return std::sqrt(acc / exec.size());
}

TrialMetrics trial(const std::string& id, Setting s, double rmse, double ins, double t = 10, int rem = 0) {
  return {id, s, t, rmse, {ins}, rem};
}

Envelope ev(const std::string& dev, std::uint64_t seq, std::int64_t ts, json payload) {
  return {dev, seq, ts, std::move(payload)};
}

}  // namespace

TEST_CASE("trajectory_rmse: worked examples") {
  const Path g = straight(50, 100);
  CHECK(trajectory_rmse(g, g) == 0.0);
  Path off = g;
  for (auto& p : off) p += Vec3(100, 0, 0);
  CHECK(trajectory_rmse(off, g) == doctest::Approx(100.0));
  CHECK_THROWS_AS(trajectory_rmse(Path{}, g), UndefinedMetricError);
}

TEST_CASE("trajectory_rmse matches a double-loop oracle on 500 vs 200 points") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1500.0);
  for (int rep = 0; rep < 5; ++rep) {
    Path exec, guide;
    for (int i = 0; i < 500; ++i) exec.emplace_back(n(rng), n(rng), n(rng));
    for (int i = 0; i < 200; ++i) guide.emplace_back(n(rng), n(rng), n(rng));
    const double got = trajectory_rmse(exec, guide);
    CHECK(got == doctest::Approx(double(brute_rmse(exec, guide))).epsilon(1e-9));
  }
}

TEST_CASE("trajectory_rmse is invariant under rigid translation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 800.0);
  for (int rep = 0; rep < 20; ++rep) {
    Path exec, guide;
    for (int i = 0; i < 60; ++i) exec.emplace_back(n(rng), n(rng), n(rng));
    for (int i = 0; i < 40; ++i) guide.emplace_back(n(rng), n(rng), n(rng));
    const Vec3 shift(n(rng) * 10, n(rng) * 10, n(rng) * 10);
    Path e2 = exec, g2 = guide;
    for (auto& p : e2) p += shift;
    for (auto& p : g2) p += shift;
    CHECK(trajectory_rmse(e2, g2) == doctest::Approx(trajectory_rmse(exec, guide)).epsilon(1e-9));
  }
}

TEST_CASE("trajectory_rmse is zero iff every executed point is a guide point") {
  const Path g = straight(20, 50);
  Path subset{g[3], g[3], g[19], g[0]};
  CHECK(trajectory_rmse(subset, g) == 0.0);
  subset.push_back(g[5] + Vec3(0, 0, 1e-3));
  CHECK(trajectory_rmse(subset, g) > 0.0);
}

TEST_CASE("trajectory_rmse works in float") {
  PathT<float> g{Vec3T<float>(0, 0, 0), Vec3T<float>(0, 100, 0)};
  PathT<float> e{Vec3T<float>(30, 0, 0), Vec3T<float>(0, 100, 40)};
  CHECK(trajectory_rmse(e, g) == doctest::Approx(std::sqrt((900.0 + 1600.0) / 2.0)));
}

TEST_CASE("insertion_error examples") {
  const Vec3 t(100, 200, 12000);
  CHECK(insertion_error(t, t) == 0.0);
  CHECK(insertion_error(Vec3(t + Vec3(300, 400, 0)), t) == doctest::Approx(500.0));
}

TEST_CASE("summarize: means, absent settings and learning curve") {
  const auto one = summarize({trial("a", Setting::kHG, 123, 45, 7, 2)});
  REQUIRE(one.get(Setting::kHG));
  CHECK(one.get(Setting::kHG)->trajectory_rmse_um == 123);
  CHECK(one.get(Setting::kHG)->insertion_error_um == 45);
  CHECK(one.get(Setting::kHG)->time_cost_s == 7);
  CHECK(one.get(Setting::kHG)->reminder_count == 2);
  CHECK_FALSE(one.get(Setting::kNF).has_value());

  const auto two = summarize({trial("a", Setting::kNF, 100, 1), trial("b", Setting::kNF, 300, 3)});
  CHECK(two.get(Setting::kNF)->trajectory_rmse_um == 200);
  CHECK(two.get(Setting::kNF)->trials == 2);
  CHECK(two.curve.rolling_rmse_um == std::vector<double>{100, 200});
  CHECK(two.curve.trials[1].trial_id == "b");
}

TEST_CASE("rolling mean uses a shorter window at the start") {
  CHECK(rolling_mean({3, 6, 9, 12}, 3) == std::vector<double>{3, 4.5, 6, 9});
  CHECK(rolling_mean({}, 3).empty());
  CHECK_THROWS_AS(rolling_mean({1}, 0), ConfigError);
}

TEST_CASE("settings parse with both spellings of the combined condition") {
  CHECK(setting_from_string("TF&HG") == Setting::kTF_HG);
  CHECK(setting_from_string("TF_HG") == Setting::kTF_HG);
  CHECK(to_string(Setting::kTF) == "TF");
  CHECK_THROWS_AS(setting_from_string("XX"), ConfigError);
}

TEST_CASE("metrics JSON round-trip keeps missing values as NaN") {
  TrialMetrics m = trial("x", Setting::kTF, 12.5, 300, 41.25, 3);
  m.insertion_errors_um.push_back(100);
  CHECK(metrics_from_json(metrics_to_json(m)) == m);
  CHECK(m.mean_insertion_error_um() == 200);
  TrialMetrics nan = m;
  nan.trajectory_rmse_um = std::numeric_limits<double>::quiet_NaN();
  const auto back = metrics_from_json(json::parse(metrics_to_json(nan).dump()));
  CHECK(std::isnan(back.trajectory_rmse_um));
}

TEST_CASE("metrics CSV has the plot-data columns") {
  const std::string csv = metrics_csv({trial("t1", Setting::kHG, 1.5, 2.5, 3.5, 4)});
  CHECK(csv.rfind("trial,setting,rmse_um,insertion_um,time_s,reminders\n", 0) == 0);
  CHECK(csv.find("t1,HG,1.5,2.5,3.5,4\n") != std::string::npos);
}

TEST_CASE("MetricsCollector rebuilds metrics from an envelope stream") {
  MetricsCollector c;
  std::uint64_t s = 0;
  c.consume(ev("event", ++s, 0, {{"kind", "session_start"}, {"trial_id", "t9"}, {"setting", "TF_HG"}}));
  c.consume(ev("guide", 1, 0, {{"points", {{0, 0, 0}, {0, 100, 0}}}, {"ci", {{1, 1, 1}, {1, 1, 1}}}}));
  c.consume(ev("leader", 1, 100, {{"pos_mm", {0, 0, 0}}, {"stylus", false}, {"pedal", false}}));
  c.consume(ev("leader", 2, 500, {{"pos_mm", {0, 0, 0}}, {"stylus", false}, {"pedal", true}}));
  // Outside the follow phase: ignored for RMSE.
  c.consume(ev("follower", 1, 500, {{"pos_um", {999, 0, 0}}, {"engaged", true}, {"insertion_latched", false}, {"clamped", false}}));
  c.consume(ev("event", ++s, 600, {{"kind", "phase"}, {"phase", "follow"}}));
  c.consume(ev("follower", 2, 600, {{"pos_um", {30, 0, 0}}, {"engaged", true}, {"insertion_latched", false}, {"clamped", false}}));
  c.consume(ev("follower", 3, 700, {{"pos_um", {0, 100, 40}}, {"engaged", true}, {"insertion_latched", false}, {"clamped", false}}));
  c.consume(ev("event", ++s, 800, {{"kind", "phase"}, {"phase", "insert"}}));
  c.consume(ev("follower", 4, 800, {{"pos_um", {5000, 0, 0}}, {"engaged", true}, {"insertion_latched", false}, {"clamped", false}}));
  for (bool v : {false, true, true, false, true, false})
    c.consume(ev("haptic", ++s, 800, {{"force_n", {0, 0, 0}}, {"guidance_n", {0, 0, 0}}, {"fixture_n", {0, 0, 0}},
                                       {"nearest_index", 0}, {"deviation_um", 0}, {"violated", v}, {"output_active", true}}));
  // Two attempts on target 0: only the last counts.
  c.consume(ev("event", ++s, 900, {{"kind", "insertion"}, {"target", 0}, {"tip_um", {0, 0, 0}}, {"target_um", {1000, 0, 0}}}));
  c.consume(ev("event", ++s, 950, {{"kind", "insertion"}, {"target", 0}, {"tip_um", {0, 0, 0}}, {"target_um", {300, 400, 0}}}));
  c.consume(ev("event", ++s, 960, {{"kind", "insertion"}, {"target", 1}, {"tip_um", {0, 0, 0}}, {"target_um", {0, 0, 100}}}));
  c.consume(ev("event", ++s, 2500, {{"kind", "complete"}}));
  c.consume(ev("leader", 3, 3000, {{"pos_mm", {0, 0, 0}}, {"stylus", false}, {"pedal", true}}));

  const TrialMetrics m = c.metrics();
  CHECK(m.trial_id == "t9");
  CHECK(m.setting == Setting::kTF_HG);
  CHECK(m.time_cost_s == doctest::Approx(2.0));
  CHECK(m.trajectory_rmse_um == doctest::Approx(std::sqrt((900.0 + 1600.0) / 2.0)));
  CHECK(m.insertion_errors_um == std::vector<double>{500, 100});
  CHECK(m.reminder_count == 2);
}

TEST_CASE("MetricsCollector without completion uses the last timestamp") {
  MetricsCollector c;
  c.consume(ev("leader", 1, 1000, {{"pos_mm", {0, 0, 0}}, {"stylus", false}, {"pedal", true}}));
  c.consume(ev("leader", 2, 4500, {{"pos_mm", {0, 0, 0}}, {"stylus", false}, {"pedal", true}}));
  const auto m = c.metrics();
  CHECK(m.time_cost_s == doctest::Approx(3.5));
  CHECK(std::isnan(m.trajectory_rmse_um));
  CHECK(m.insertion_errors_um.empty());
}
