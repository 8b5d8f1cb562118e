#include "oracles.hpp"
#include "tims/tactile.hpp"

#include <doctest.h>

#include <random>

using namespace tims;

TEST_CASE("rest is a fixed point") {
  TactileFrame f;
  const auto g = update_tactile(f, false, 10.0);
  for (double a : g.actuators) CHECK(a == 0.0);
  CHECK_FALSE(g.commanded);
  CHECK(g.timestamp_ms == 10);
}

TEST_CASE("one inflate time constant reaches 1 - 1/e") {
  TactileConfig cfg;
  const auto g = update_tactile(TactileFrame{}, true, cfg.tau_inflate_ms, cfg);
  for (double a : g.actuators) CHECK(a == doctest::Approx(1.0 - std::exp(-1.0)));
  CHECK(g.commanded);
}

TEST_CASE("deflation uses its own time constant") {
  TactileConfig cfg;
  TactileFrame full;
  full.actuators.fill(1.0);
  const auto g = update_tactile(full, false, cfg.tau_deflate_ms, cfg);
  CHECK(g.level() == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("matches an RK4 integration of the ODE") {
  TactileConfig cfg;
  TactileFrame f;
  double ref = 0;
  std::mt19937_64 rng(3);
  std::bernoulli_distribution touch(0.5);
  std::uniform_real_distribution<double> dt(0.5, 40.0);
  for (int k = 0; k < 500; ++k) {
    const bool t = touch(rng);
    const double h = dt(rng);
    f = update_tactile(f, t, h, cfg);
    ref = oracle::rk4_first_order(ref, t ? 1.0 : 0.0, t ? cfg.tau_inflate_ms : cfg.tau_deflate_ms, h);
    REQUIRE(f.level() == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("1 Hz square wave: bounded, equal actuators, periodic after the first cycle") {
  TactileConfig cfg;
  TactileFrame f;
  std::vector<double> levels;
  for (int ms = 0; ms < 10000; ms += 1) {
    const bool touching = (ms % 1000) < 500;
    f = update_tactile(f, touching, 1.0, cfg);
    for (double a : f.actuators) {
      REQUIRE(a >= 0.0);
      REQUIRE(a <= 1.0);
      REQUIRE(a == f.actuators[0]);
    }
    levels.push_back(f.level());
  }
  for (std::size_t i = 1000; i + 1000 < levels.size(); ++i) CHECK(std::abs(levels[i] - levels[i + 1000]) <= 1e-6);
}

TEST_CASE("monotone toward the fixed point while the input is constant") {
  TactileFrame f;
  f.actuators.fill(0.3);
  double prev = f.level();
  for (int k = 0; k < 100; ++k) {
    f = update_tactile(f, true, 5.0);
    CHECK(f.level() >= prev);
    prev = f.level();
  }
  for (int k = 0; k < 100; ++k) {
    f = update_tactile(f, false, 5.0);
    CHECK(f.level() <= prev);
    prev = f.level();
  }
}

TEST_CASE("patterned state is kept per actuator") {
  TactileFrame f;
  f.actuators[5] = 0.8;
  const auto g = update_tactile(f, false, 10.0);
  CHECK(g.actuators[5] > 0.0);
  CHECK(g.actuators[0] == 0.0);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(update_tactile(TactileFrame{}, true, 0.0), ValidationError);
  TactileConfig bad;
  bad.tau_deflate_ms = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
