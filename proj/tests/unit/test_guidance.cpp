#include "oracles.hpp"
#include "tims/guidance.hpp"

#include <doctest.h>

#include <random>

using namespace tims;

namespace {

Path wavy_path(int n) {
  Path p;
  for (int i = 0; i < n; ++i)
    p.emplace_back(60.0 * i, 800.0 * std::sin(0.05 * i), 11800.0 + 100.0 * std::cos(0.03 * i));
  return p;
}

}  // namespace

TEST_CASE("nearest_point: exact hit and tie-break") {
  const Path path = wavy_path(20);
  const auto hit = nearest_point(path[7], path);
  CHECK(hit.index == 7);
  CHECK(hit.distance == 0.0);
  CHECK(hit.point == path[7]);

  const Path two = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0), Vec3(4, 0, 0)};
  CHECK(nearest_point(Vec3(3.5, 1, 0), two).index == 3);
}

TEST_CASE("nearest_point: matches exhaustive scan on 1000 random queries") {
  const Path path = wavy_path(200);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(-500, 12500), uy(-1500, 1500), uz(11000, 12500);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    const auto got = nearest_point(p, path);
    const auto ref = oracle::nearest(p, path);
    REQUIRE(got.index == ref.index);
    CHECK(got.distance == doctest::Approx(ref.distance).epsilon(1e-12));
  }
}

TEST_CASE("nearest_point: monotone mode never goes below the cursor") {
  // A loop: the global nearest for late queries is near the start.
  Path loop;
  for (int i = 0; i < 100; ++i) {
    const double th = 2 * 3.14159265358979 * i / 100.0;
    loop.emplace_back(1000 * std::cos(th), 1000 * std::sin(th), 0);
  }
  std::size_t cursor = 0;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1200, 1200);
  for (int k = 0; k < 300; ++k) {
    const Vec3 p(u(rng), u(rng), 0);
    const auto n = nearest_point(p, loop, cursor, ProgressMode::kMonotone);
    CHECK(n.index >= cursor);
    CHECK(n.index == oracle::nearest(p, loop, cursor).index);
    cursor = n.index;
  }
  CHECK_THROWS_AS(nearest_point(Vec3(Vec3::Zero()), loop, 100, ProgressMode::kMonotone), ConfigError);
}

TEST_CASE("nearest_point: empty path") {
  CHECK_THROWS_AS(nearest_point(Vec3(Vec3::Zero()), Path{}), ConfigError);
}

TEST_CASE("guidance_force: worked examples") {
  const Path path = {Vec3(0, 0, 0)};
  GuidanceConfig cfg;
  CHECK(guidance_force(Vec3(150, 0, 0), path, cfg).force == Vec3::Zero());
  const auto f = guidance_force(Vec3(1000, 0, 0), path, cfg);
  CHECK(f.force.isApprox(Vec3(-0.5, 0, 0)));
  CHECK(f.deviation == 1000.0);
  const auto c = guidance_force(Vec3(10000, 0, 0), path, cfg);
  CHECK(c.force.isApprox(Vec3(-3.0, 0, 0)));
}

TEST_CASE("guidance_force: literal sign convention points away") {
  GuidanceConfig cfg;
  cfg.sign = SignConvention::kLiteral;
  const auto f = guidance_force(Vec3(0, 1000, 0), Path{Vec3::Zero()}, cfg);
  CHECK(f.force.isApprox(Vec3(0, 0.5, 0)));
}

TEST_CASE("guidance_force: dead zone iff deviation <= threshold, restoring direction") {
  const Path path = wavy_path(200);
  GuidanceConfig cfg;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> off(0.0, 300.0);
  std::uniform_int_distribution<int> idx(0, 199);
  int active = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vec3 p = path[static_cast<std::size_t>(idx(rng))] + Vec3(off(rng), off(rng), off(rng));
    const auto f = guidance_force(p, path, cfg);
    const auto ref = oracle::nearest(p, path);
    const bool zero = f.force == Vec3::Zero();
    CHECK(zero == (ref.distance <= cfg.deviation_threshold));
    if (!zero) {
      ++active;
      const Vec3 away = p - path[ref.index];
      const double cosang = f.force.dot(away) / (f.force.norm() * away.norm());
      CHECK(cosang <= -1.0 + 1e-9);
      CHECK(f.force.norm() <= cfg.max_force + 1e-12);
    }
  }
  CHECK(active > 100);
}

TEST_CASE("guidance_force: exactly at the threshold is still the dead zone") {
  GuidanceConfig cfg;
  CHECK(guidance_force(Vec3(0, 0, 200), Path{Vec3::Zero()}, cfg).force == Vec3::Zero());
  CHECK(guidance_force(Vec3(0, 0, 200.001), Path{Vec3::Zero()}, cfg).force != Vec3::Zero());
}

TEST_CASE("guidance_force: magnitude is continuous and non-decreasing across the cap") {
  GuidanceConfig cfg;
  const double cap_dev = cfg.max_force / cfg.force_gain;  // 6000 um
  double prev = 0;
  for (int k = 0; k < 100; ++k) {
    const double dev = cap_dev - 50.0 + k;  // straddles the cap
    const double mag = guidance_force(Vec3(dev, 0, 0), Path{Vec3::Zero()}, cfg).force.norm();
    CHECK(mag == doctest::Approx(std::min(cfg.force_gain * dev, cfg.max_force)).epsilon(1e-12));
    CHECK(mag >= prev);
    if (k > 0) CHECK(mag - prev <= cfg.force_gain * 1.0 + 1e-12);
    prev = mag;
  }
}

TEST_CASE("fixture_force: worked examples") {
  SafetyBoundary b;
  b.surface.radius = 12000;
  b.fixture_gain = 1e-3;
  const auto above = fixture_force(Vec3(0, 0, 12500), b);
  CHECK(above.force == Vec3::Zero());
  CHECK_FALSE(above.violated);
  const auto at = fixture_force(Vec3(0, 0, 12000 - 150), b);
  CHECK(at.force == Vec3::Zero());
  CHECK_FALSE(at.violated);
  const auto past = fixture_force(Vec3(0, 0, 12000 - 250), b);
  CHECK(past.violated);
  CHECK(past.force.isApprox(Vec3(0, 0, 1e-3 * 100)));
}

TEST_CASE("fixture_force: direction is the analytic outward normal") {
  SafetyBoundary b;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const Vec3 dir = Vec3(n(rng), n(rng), n(rng)).normalized();
    const double depth = 160 + 1000 * std::abs(n(rng));
    const auto r = fixture_force<double>((12000 - depth) * dir, b);
    REQUIRE(r.violated);
    CHECK((r.force - b.fixture_gain * (depth - 150) * dir).norm() <= 1e-9);
  }
}

TEST_CASE("fixture_force: center is violated without a direction") {
  SafetyBoundary b;
  const auto r = fixture_force(Vec3(Vec3::Zero()), b);
  CHECK(r.violated);
  CHECK(r.force == Vec3::Zero());
}

TEST_CASE("total force is clamped last") {
  const Vec3 g(2.5, 0, 0), f(2.5, 0, 0);
  CHECK(total_force<double>(g, f, 3.0).isApprox(Vec3(3, 0, 0)));
  CHECK(total_force<double>(Vec3(1, 0, 0), Vec3(0, 1, 0), 3.0) == Vec3(1, 1, 0));
}

TEST_CASE("reminder counter counts rising edges") {
  ReminderCounter c;
  for (bool v : {false, true, true, false, true, false, false, true, true})
    c.update(v);
  CHECK(c.count() == 3);
}

TEST_CASE("config validation") {
  GuidanceConfig g;
  g.force_gain = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  SafetyBoundary b;
  b.penetration_limit = 0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
}
