#include "tims/bus/session_log.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

namespace tims::bus {

std::string header_line(const LogHeader& h) {
  json j{{"schema", kSessionSchema}, {"session_id", h.session_id}, {"config_hash", h.config_hash}, {"meta", h.extra}};
  return j.dump();
}

std::string entry_line(const LogEntry& e) {
  json j{{"rx", e.rx_ms}, {"env", envelope_to_json(e.env)}};
  return j.dump();
}

SessionRecorder::SessionRecorder(std::ostream& out, const LogHeader& header) : out_(out) {
  out_ << header_line(header) << '\n';
}

void SessionRecorder::record(std::int64_t rx_ms, const Envelope& env) {
  std::lock_guard lock(mu_);
  last_rx_ = std::max(last_rx_, rx_ms);
  out_ << entry_line({last_rx_, env}) << '\n';
  ++count_;
}

std::size_t SessionRecorder::count() const {
  std::lock_guard lock(mu_);
  return count_;
}

void MemoryRecorder::record(std::int64_t rx_ms, const Envelope& env) {
  std::lock_guard lock(mu_);
  last_rx_ = std::max(last_rx_, rx_ms);
  log_.entries.push_back({last_rx_, env});
}

SessionLog MemoryRecorder::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

LogHeader parse_header_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw LogFormatError(1, std::string("invalid header JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != kSessionSchema)
    throw LogFormatError(1, std::string("unsupported log schema (expected ") + kSessionSchema + ")");
  LogHeader h;
  h.session_id = j.value("session_id", "");
  h.config_hash = j.value("config_hash", "");
  h.extra = j.value("meta", json::object());
  return h;
}

LogEntry parse_entry_line(const std::string& line, std::size_t line_no) {
  try {
    const json j = json::parse(line);
    LogEntry e;
    e.rx_ms = j.at("rx").get<std::int64_t>();
    e.env = envelope_from_json(j.at("env"));
    return e;
  } catch (const json::exception& ex) {
    throw LogFormatError(line_no, ex.what());
  } catch (const SchemaError& ex) {
    throw LogFormatError(line_no, ex.what());
  }
}

namespace {

/// Header on line 1, then entries. Blank lines are skipped.
void for_each_entry(std::istream& in, LogHeader* header_out,
                    const std::function<void(const LogEntry&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  std::int64_t last_rx = std::numeric_limits<std::int64_t>::min();
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      const auto h = parse_header_line(line);
      if (header_out) *header_out = h;
      continue;
    }
    if (line.empty()) continue;
    const auto e = parse_entry_line(line, line_no);
    if (e.rx_ms < last_rx) throw LogFormatError(line_no, "receive timestamp decreases");
    last_rx = e.rx_ms;
    fn(e, line_no);
  }
  if (line_no == 0) throw LogFormatError(1, "empty log (missing header)");
}

}  // namespace

SessionLog read_session_log(std::istream& in) {
  SessionLog log;
  for_each_entry(in, &log.header, [&](const LogEntry& e, std::size_t) { log.entries.push_back(e); });
  return log;
}

SessionLog read_session_log(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("io", "cannot open log " + file.string());
  return read_session_log(in);
}

void write_session_log(std::ostream& out, const SessionLog& log) {
  out << header_line(log.header) << '\n';
  for (const auto& e : log.entries) out << entry_line(e) << '\n';
}

namespace {

void pace(double speed, std::int64_t gap_ms, std::chrono::steady_clock::time_point& due) {
  if (!(speed < kBatchSpeed)) return;
  due += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double, std::milli>(static_cast<double>(gap_ms) / speed));
  std::this_thread::sleep_until(due);
}

void check_speed(double speed) {
  if (!(speed > 0)) throw ConfigError("replay speed must be > 0");
}

}  // namespace

std::size_t replay(std::istream& in, double speed, const std::function<void(const Envelope&)>& sink,
                   LogHeader* header_out) {
  check_speed(speed);
  std::size_t delivered = 0;
  std::optional<std::int64_t> prev_rx;
  auto due = std::chrono::steady_clock::now();
  for_each_entry(in, header_out, [&](const LogEntry& e, std::size_t) {
    if (prev_rx) pace(speed, e.rx_ms - *prev_rx, due);
    prev_rx = e.rx_ms;
    sink(e.env);
    ++delivered;
  });
  return delivered;
}

std::size_t replay(const SessionLog& log, double speed, const std::function<void(const Envelope&)>& sink) {
  check_speed(speed);
  auto due = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    if (i > 0) pace(speed, log.entries[i].rx_ms - log.entries[i - 1].rx_ms, due);
    sink(log.entries[i].env);
  }
  return log.entries.size();
}

std::function<void(const Envelope&)> publish_into(Broker& broker) {
  return [&broker](const Envelope& env) { broker.publish(env); };
}

}  // namespace tims::bus
