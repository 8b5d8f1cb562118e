#include "oracles.hpp"
#include "tims/phantom.hpp"

#include <doctest.h>

#include <random>

using namespace tims;

TEST_CASE("default phantom is valid and shaped as described") {
  const Phantom ph = default_phantom();
  CHECK_NOTHROW(ph.validate());
  CHECK(ph.sphere.radius == 12000.0);
  CHECK(ph.vessel.size() == 200);
  REQUIRE(ph.clots.size() == 2);
  for (const auto& c : ph.clots) CHECK(c.radius == 250.0);
  // 60 degree arc: the end points subtend 60 degrees at the center.
  const Vec3 a = ph.vessel.front().normalized(), b = ph.vessel.back().normalized();
  CHECK(std::acos(a.dot(b)) == doctest::Approx(std::numbers::pi / 3));
}

TEST_CASE("contact_query: worked examples") {
  Phantom ph = default_phantom();
  const auto far = contact_query(Vec3(ph.sphere.radius + 1000, 0, 0), ph);
  CHECK_FALSE(far.touching);
  CHECK(far.penetration == 0.0);
  const Vec3 on(ph.sphere.radius, 0, 0);
  const auto c = contact_query(on, ph);
  CHECK(c.touching);
  CHECK(c.penetration == 0.0);
  CHECK(c.contact_point == on);
  const auto in = contact_query(Vec3(0, ph.sphere.radius - 300, 0), ph);
  CHECK(in.touching);
  CHECK(in.penetration == doctest::Approx(300));
  CHECK(in.contact_point.isApprox(Vec3(0, ph.sphere.radius, 0)));
  CHECK(contact_query(Vec3(0, 0, ph.sphere.radius + 20), ph).touching);
  CHECK_FALSE(contact_query(Vec3(0, 0, ph.sphere.radius + 20.5), ph).touching);
  CHECK_THROWS_AS(contact_query(ph.sphere.center, ph), DegenerateNormalError);
}

TEST_CASE("contact_query agrees with the squared-radius oracle on 10,000 tips") {
  Phantom ph = default_phantom();
  ph.sphere.center = Vec3(150, -40, 75);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> dir(0.0, 1.0);
  std::uniform_real_distribution<double> shell(11500, 12500);
  int touching = 0;
  for (int k = 0; k < 10000; ++k) {
    const Vec3 tip = ph.sphere.center + shell(rng) * Vec3(dir(rng), dir(rng), dir(rng)).normalized();
    const auto got = contact_query(tip, ph);
    const auto ref = oracle::contact(tip, ph.sphere.center, ph.sphere.radius, ph.contact_tolerance);
    REQUIRE(got.touching == ref.touching);
    CHECK(got.penetration == doctest::Approx(double(ref.penetration)).epsilon(1e-12));
    touching += got.touching;
  }
  CHECK(touching > 1000);
  CHECK(touching < 9000);
}

TEST_CASE("attempt_insertion: hit, miss distance and nearest target") {
  Phantom ph = default_phantom();
  const Vec3 c0 = ph.clots[0].position;
  auto r = attempt_insertion(c0, ph);
  REQUIRE(r.hit.has_value());
  CHECK(*r.hit == 0);
  CHECK(r.miss_distance == 0.0);
  CHECK(ph.clots[0].punctured);

  Phantom p2 = default_phantom();
  const Vec3 c1 = p2.clots[1].position;
  const Vec3 off = c1 + Vec3(250 + 490.73, 0, 0);
  r = attempt_insertion(off, p2);
  CHECK_FALSE(r.hit.has_value());
  CHECK(r.target == 1);
  CHECK(r.miss_distance == doctest::Approx(250 + 490.73));
  CHECK_FALSE(p2.clots[1].punctured);
}

TEST_CASE("attempt_insertion: 300 vs 800 um picks the nearer clot and misses") {
  Phantom ph;
  ph.clots = {{Vec3(800, 0, 0), 250, false}, {Vec3(0, 300, 0), 250, false}};
  const auto r = attempt_insertion(Vec3::Zero(), ph);
  CHECK(r.target == 1);
  CHECK_FALSE(r.hit.has_value());
  CHECK(r.miss_distance == doctest::Approx(300));
}

TEST_CASE("attempt_insertion: punctured clots are skipped, none left is an error") {
  Phantom ph = default_phantom();
  attempt_insertion(ph.clots[0].position, ph);
  const auto r = attempt_insertion(ph.clots[0].position, ph);
  CHECK(r.target == 1);
  attempt_insertion(ph.clots[1].position, ph);
  CHECK_THROWS_AS(attempt_insertion(Vec3::Zero(), ph), NoTargetError);
  // Punctured flags never revert.
  CHECK(ph.clots[0].punctured);
  CHECK(ph.clots[1].punctured);
}

TEST_CASE("validate lists every offending vessel index") {
  Phantom ph = default_phantom();
  ph.vessel[3] *= 1.01;
  ph.vessel[17] *= 0.99;
  try {
    ph.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(" 3") != std::string::npos);
    CHECK(msg.find(" 17") != std::string::npos);
  }
  Phantom bad_clot = default_phantom();
  bad_clot.clots[1].position *= 1.1;
  CHECK_THROWS_AS(bad_clot.validate(), ConfigError);
}

TEST_CASE("phantom JSON round-trip and errors") {
  const Phantom ph = default_phantom(50);
  const Phantom back = phantom_from_json_text(phantom_to_json_text(ph));
  CHECK(back.sphere.radius == ph.sphere.radius);
  REQUIRE(back.vessel.size() == 50);
  CHECK(back.vessel[10] == ph.vessel[10]);
  REQUIRE(back.clots.size() == 2);
  CHECK(back.clots[1].position == ph.clots[1].position);
  CHECK_THROWS_AS(phantom_from_json_text("{nope"), ConfigError);
  CHECK_THROWS_AS(phantom_from_json_text(R"({"center_um":[0,0],"radius_um":1,"vessel":[],"clots":[]})"), ConfigError);
}

TEST_CASE("step_scene: stationary tip gives identical frames apart from seq/time") {
  SceneState s;
  s.phantom = default_phantom();
  const Vec3 tip(0, 0, 12100);
  const auto f1 = step_scene(s, tip, 10), f2 = step_scene(s, tip, 10), f3 = step_scene(s, tip, 10);
  CHECK(f1.frame_seq == 1);
  CHECK(f3.frame_seq == 3);
  CHECK(f3.timestamp_ms == 30);
  for (const auto* f : {&f2, &f3}) {
    CHECK(f->contact == f1.contact);
    CHECK(f->tool_tip == f1.tool_tip);
    CHECK(f->clot_states == f1.clot_states);
  }
}

TEST_CASE("step_scene: crossing the surface flips touching once") {
  SceneState s;
  s.phantom = default_phantom();
  int transitions = 0;
  bool last = false;
  for (int k = 0; k <= 100; ++k) {
    const auto f = step_scene(s, Vec3(0, 0, 12500 - 10.0 * k), 10);
    if (f.contact.touching != last) ++transitions;
    last = f.contact.touching;
  }
  CHECK(transitions == 1);
  CHECK(last);
}

TEST_CASE("step_scene: identical input sequences give identical frames") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 200.0);
  std::vector<Vec3> inputs;
  for (int k = 0; k < 300; ++k) inputs.emplace_back(n(rng), n(rng), 12000 + n(rng));
  SceneState a, b;
  a.phantom = b.phantom = default_phantom();
  for (const auto& p : inputs) CHECK(step_scene(a, p, 10) == step_scene(b, p, 10));
}

TEST_CASE("step_scene: rejects non-positive dt and survives the exact center") {
  SceneState s;
  CHECK_THROWS_AS(step_scene(s, Vec3::Zero(), 0), ValidationError);
  const auto f = step_scene(s, s.phantom.sphere.center, 10);
  CHECK(f.contact.touching);
}

namespace {

struct NeverTouching final : ContactEstimator {
  ContactState estimate(const Vec3&, const Phantom&) const override { return {}; }
};

}  // namespace

TEST_CASE("contact estimator is pluggable") {
  SceneState s;
  s.estimator = std::make_shared<NeverTouching>();
  CHECK_FALSE(step_scene(s, Vec3(0, 0, 100), 10).contact.touching);
}
