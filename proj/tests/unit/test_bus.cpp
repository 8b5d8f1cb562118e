#include "tims/bus/broker.hpp"
#include "tims/bus/envelope.hpp"
#include "tims/bus/schema.hpp"
#include "tims/bus/session_log.hpp"

#include <doctest.h>

#include <chrono>
#include <sstream>
#include <thread>

using namespace tims;
using namespace tims::bus;

namespace {

Envelope leader(std::uint64_t seq, double x = 0.0) {
  return {"leader", seq, static_cast<std::int64_t>(seq), json{{"pos_mm", {x, 0.0, 0.0}}, {"stylus", false}, {"pedal", true}}};
}

Envelope plain(const std::string& dev, std::uint64_t seq) {
  return {dev, seq, static_cast<std::int64_t>(seq), json{{"n", seq}}};
}

std::vector<Envelope> drain(QueueSubscriber& q) {
  std::vector<Envelope> out;
  while (auto e = q.try_pop()) out.push_back(*e);
  return out;
}

}  // namespace

TEST_CASE("envelope json and frame round-trip") {
  const Envelope e = leader(7, 1.25);
  CHECK(envelope_from_json(envelope_to_json(e)) == e);
  const std::string body = envelope_to_json(e).dump();
  const std::string frame = encode_frame(body);
  REQUIRE(frame.size() == body.size() + 4);
  CHECK(static_cast<unsigned char>(frame[0]) == ((body.size() >> 24) & 0xff));
  CHECK(static_cast<unsigned char>(frame[3]) == (body.size() & 0xff));
  CHECK_THROWS_AS(envelope_from_json(json{{"device", "leader"}}), SchemaError);
  CHECK_THROWS_AS(envelope_from_json(json::array()), SchemaError);
}

TEST_CASE("frame decoder handles byte-by-byte feeds and several frames per chunk") {
  std::string stream;
  for (int i = 0; i < 5; ++i) stream += encode_frame("frame-" + std::to_string(i));
  FrameDecoder d;
  std::vector<std::string> got;
  for (char c : stream) {
    d.feed(std::string_view(&c, 1));
    while (auto f = d.next()) got.push_back(*f);
  }
  REQUIRE(got.size() == 5);
  CHECK(got[3] == "frame-3");
  CHECK(d.buffered() == 0);

  FrameDecoder bulk;
  bulk.feed(stream + encode_frame("").substr(0, 2));
  int n = 0;
  while (bulk.next()) ++n;
  CHECK(n == 5);
  CHECK(bulk.buffered() == 2);
}

TEST_CASE("frame decoder rejects oversize length prefixes") {
  FrameDecoder d;
  d.feed(std::string("\x7f\xff\xff\xff", 4));
  CHECK_THROWS(d.next());
}

TEST_CASE("builtin schemas: good payloads pass, bad ones name the field") {
  const auto& reg = SchemaRegistry::builtin();
  for (const char* dev : {"leader", "follower", "scene", "wtd", "haptic", "pedal", "event", "guide"})
    CHECK_MESSAGE(reg.has(dev), dev);
  CHECK_NOTHROW(reg.validate(leader(1)));

  Envelope bad = leader(1);
  bad.payload["pos_mm"] = json::array({1.0, 2.0});
  bad.payload.erase("pedal");
  bad.payload["extra"] = 1;
  try {
    reg.validate(bad);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("pos_mm") != std::string::npos);
    CHECK(msg.find("pedal") != std::string::npos);
    CHECK(msg.find("extra") != std::string::npos);
  }

  Envelope wrong_type = leader(1);
  wrong_type.payload["stylus"] = "yes";
  CHECK_THROWS_AS(reg.validate(wrong_type), SchemaError);
  // Devices without a schema accept any object.
  CHECK_NOTHROW(reg.validate(plain("sensor.x", 1)));
}

TEST_CASE("schema_violations reports nested paths") {
  const json schema = {{"type", "object"},
                       {"properties", {{"a", {{"type", "array"}, {"items", {{"type", "number"}, {"minimum", 0}}}}}}}};
  const auto v = schema_violations(schema, json{{"a", {1, -2, 3}}}, "payload");
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("payload.a[1]") != std::string::npos);
}

TEST_CASE("broker: FIFO delivery, stale drop, latest value") {
  Broker b;
  auto q = b.subscribe_queue("leader");
  CHECK(b.publish(leader(1)).status == PublishStatus::kAccepted);
  CHECK(b.publish(leader(2)).status == PublishStatus::kAccepted);
  CHECK(b.publish(leader(2)).status == PublishStatus::kStale);
  CHECK(b.publish(leader(1)).status == PublishStatus::kStale);
  CHECK(b.publish(leader(5)).status == PublishStatus::kAccepted);
  const auto got = drain(*q);
  REQUIRE(got.size() == 3);
  CHECK(got[0].seq == 1);
  CHECK(got[2].seq == 5);
  CHECK(b.stats().stale == 2);
  CHECK(b.latest("leader")->seq == 5);
  CHECK_FALSE(b.latest("nobody").has_value());
}

TEST_CASE("broker: schema rejection is thrown and leaves state untouched") {
  Broker b;
  b.publish(leader(1));
  Envelope bad = leader(2);
  bad.payload.erase("stylus");
  CHECK_THROWS_AS(b.publish(bad), SchemaError);
  CHECK(b.latest("leader")->seq == 1);
  CHECK(b.stats().rejected == 1);
  CHECK_THROWS_AS(b.publish(plain("*", 1)), SchemaError);
  CHECK_THROWS_AS(b.publish(plain("", 1)), SchemaError);
}

TEST_CASE("broker: late subscriber gets latest first, unknown device is a valid empty subscription") {
  Broker b;
  for (std::uint64_t s = 1; s <= 3; ++s) b.publish(leader(s));
  auto late = b.subscribe_queue("leader");
  b.publish(leader(4));
  auto got = drain(*late);
  REQUIRE(got.size() == 2);
  CHECK(got[0].seq == 3);
  CHECK(got[1].seq == 4);

  auto future = b.subscribe_queue("not.yet");
  CHECK(future->size() == 0);
  b.publish(plain("not.yet", 1));
  CHECK(drain(*future).size() == 1);
}

TEST_CASE("broker: wildcard sees existing and later devices, unsubscribe stops delivery") {
  Broker b;
  b.publish(plain("a", 1));
  auto all = b.subscribe_queue(Broker::kAllDevices);
  b.publish(plain("b", 1));
  b.publish(plain("a", 2));
  auto got = drain(*all);
  REQUIRE(got.size() == 3);
  CHECK(got[0].device_id == "a");
  CHECK(got[1].device_id == "b");
  b.unsubscribe(all);
  b.publish(plain("a", 3));
  b.publish(plain("c", 1));
  CHECK(all->size() == 0);
}

TEST_CASE("queue subscriber drops oldest on overflow and counts it") {
  Broker b;
  auto q = b.subscribe_queue("d", 4);
  for (std::uint64_t s = 1; s <= 10; ++s) b.publish(plain("d", s));
  CHECK(q->overflow_count() == 6);
  const auto got = drain(*q);
  REQUIRE(got.size() == 4);
  CHECK(got.front().seq == 7);
  CHECK(got.back().seq == 10);
}

TEST_CASE("queue subscriber pop times out and close wakes waiters") {
  QueueSubscriber q;
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_FALSE(q.pop(std::chrono::milliseconds(20)).has_value());
  CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(15));
  std::thread t([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    q.close();
  });
  CHECK_FALSE(q.pop(std::chrono::seconds(5)).has_value());
  t.join();
  CHECK(q.closed());
}

TEST_CASE("broker: 10,000 concurrent publishes over 5 devices keep per-device FIFO") {
  auto clock = std::make_shared<ManualClock>();
  Broker b(clock);
  auto rec = std::make_shared<MemoryRecorder>(LogHeader{"concurrent", "", json::object()});
  b.add_sink(rec);
  std::vector<std::shared_ptr<QueueSubscriber>> subs;
  for (int d = 0; d < 5; ++d) subs.push_back(b.subscribe_queue("dev" + std::to_string(d), 4096));
  auto all = b.subscribe_queue(Broker::kAllDevices, 20000);

  std::vector<std::thread> threads;
  for (int d = 0; d < 5; ++d)
    threads.emplace_back([&, d] {
      for (std::uint64_t s = 1; s <= 2000; ++s) b.publish(plain("dev" + std::to_string(d), s));
    });
  // A reader hammering the latest store while publishes run.
  std::atomic<bool> done{false};
  std::thread reader([&] {
    std::map<std::string, std::uint64_t> seen;
    while (!done) {
      for (const auto& [dev, env] : b.latest_snapshot()) {
        CHECK(env.seq >= seen[dev]);
        CHECK(env.payload["n"] == env.seq);
        seen[dev] = env.seq;
      }
    }
  });
  for (auto& t : threads) t.join();
  done = true;
  reader.join();

  for (int d = 0; d < 5; ++d) {
    const auto got = drain(*subs[d]);
    REQUIRE(got.size() == 2000);
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i].seq == i + 1);
    CHECK(b.latest("dev" + std::to_string(d))->seq == 2000);
  }
  std::map<std::string, std::uint64_t> last;
  const auto merged = drain(*all);
  CHECK(merged.size() == 10000);
  for (const auto& e : merged) {
    REQUIRE(e.seq == last[e.device_id] + 1);
    last[e.device_id] = e.seq;
  }
  CHECK(rec->log().entries.size() == 10000);
  CHECK(b.stats().accepted == 10000);
}

TEST_CASE("session log write/read round-trip") {
  auto clock = std::make_shared<ManualClock>();
  Broker b(clock);
  std::ostringstream out;
  auto rec = std::make_shared<SessionRecorder>(out, LogHeader{"s1", "abcd", json{{"setting", "NF"}}});
  b.add_sink(rec);
  for (std::uint64_t s = 1; s <= 20; ++s) {
    clock->set(static_cast<std::int64_t>(s * 10));
    b.publish(leader(s, 0.1 * s));
  }
  CHECK(rec->count() == 20);
  std::istringstream in(out.str());
  const SessionLog log = read_session_log(in);
  CHECK(log.header.session_id == "s1");
  CHECK(log.header.config_hash == "abcd");
  CHECK(log.header.extra["setting"] == "NF");
  REQUIRE(log.entries.size() == 20);
  CHECK(log.entries[4].rx_ms == 50);
  CHECK(log.entries[4].env == leader(5, 0.5));

  std::ostringstream again;
  write_session_log(again, log);
  CHECK(again.str() == out.str());
}

TEST_CASE("corrupted log line is reported with its number and halts replay there") {
  SessionLog log{{"s", "", json::object()}, {}};
  for (std::uint64_t s = 1; s <= 5; ++s) log.entries.push_back({static_cast<std::int64_t>(s), leader(s)});
  std::ostringstream out;
  write_session_log(out, log);
  std::string text = out.str();
  // Break the fourth entry (line 5 counting the header).
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) pos = text.find('\n', pos) + 1;
  text.insert(pos + 3, "!!");
  std::istringstream in(text);
  std::size_t delivered = 0;
  try {
    replay(in, kBatchSpeed, [&](const Envelope&) { ++delivered; });
    FAIL("expected LogFormatError");
  } catch (const LogFormatError& e) {
    CHECK(e.line() == 5);
  }
  CHECK(delivered == 3);

  std::istringstream in2(text);
  CHECK_THROWS_AS(read_session_log(in2), LogFormatError);
  std::istringstream no_header("{\"rx\":1}\n");
  CHECK_THROWS_AS(read_session_log(no_header), LogFormatError);
}

TEST_CASE("replay of an empty log is an empty stream") {
  SessionLog log;
  CHECK(replay(log, 1.0, [](const Envelope&) { FAIL("nothing to deliver"); }) == 0);
  std::istringstream in(header_line({"empty", "", json::object()}) + "\n");
  CHECK(replay(in, 1.0, [](const Envelope&) { FAIL("nothing to deliver"); }) == 0);
  CHECK_THROWS_AS(replay(log, 0.0, [](const Envelope&) {}), ConfigError);
}

TEST_CASE("batch replay into a fresh broker reproduces the recording") {
  SessionLog log{{"s", "", json::object()}, {}};
  for (std::uint64_t s = 1; s <= 50; ++s) {
    log.entries.push_back({static_cast<std::int64_t>(s), leader(s, s * 0.01)});
    log.entries.push_back({static_cast<std::int64_t>(s), plain("aux", s)});
  }
  auto clock = std::make_shared<ManualClock>();
  Broker b(clock);
  auto rec = std::make_shared<MemoryRecorder>(log.header);
  b.add_sink(rec);
  replay(log, kBatchSpeed, [&](const Envelope& e) {
    clock->set(static_cast<std::int64_t>(e.seq));
    b.publish(e);
  });
  CHECK(rec->log().entries == log.entries);
}

TEST_CASE("speed 2 replay of a 10 s log takes 5 s") {
  SessionLog log{{"timed", "", json::object()}, {}};
  for (std::uint64_t s = 0; s <= 100; ++s) log.entries.push_back({static_cast<std::int64_t>(s * 100), plain("t", s + 1)});
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(replay(log, 2.0, [](const Envelope&) {}) == 101);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs == doctest::Approx(5.0).epsilon(0.05));
}
