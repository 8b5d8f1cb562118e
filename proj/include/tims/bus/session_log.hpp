#pragma once

// Session recording (JSON lines: one header line, then one envelope per
// line) and deterministic replay.

#include "tims/bus/broker.hpp"
#include "tims/bus/envelope.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

namespace tims::bus {

inline constexpr const char* kSessionSchema = "tims/session/1";

struct LogHeader {
  std::string session_id;
  std::string config_hash;
  json extra = json::object();  // free-form session metadata (setting, seed, ...)
};

struct LogEntry {
  std::int64_t rx_ms = 0;
  Envelope env;

  bool operator==(const LogEntry&) const = default;
};

struct SessionLog {
  LogHeader header;
  std::vector<LogEntry> entries;
};

struct LogFormatError : Error {
  LogFormatError(std::size_t line, const std::string& what)
      : Error("log-format", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string header_line(const LogHeader& h);
std::string entry_line(const LogEntry& e);

/// Appends accepted publishes to a stream as they happen. Receive times are
/// forced non-decreasing.
class SessionRecorder final : public PublishSink {
 public:
  SessionRecorder(std::ostream& out, const LogHeader& header);
  void record(std::int64_t rx_ms, const Envelope& env) override;
  std::size_t count() const;

 private:
  mutable std::mutex mu_;
  std::ostream& out_;
  std::int64_t last_rx_ = std::numeric_limits<std::int64_t>::min();
  std::size_t count_ = 0;
};

/// Keeps the log in memory.
class MemoryRecorder final : public PublishSink {
 public:
  explicit MemoryRecorder(LogHeader header) { log_.header = std::move(header); }
  void record(std::int64_t rx_ms, const Envelope& env) override;
  SessionLog log() const;

 private:
  mutable std::mutex mu_;
  SessionLog log_;
  std::int64_t last_rx_ = std::numeric_limits<std::int64_t>::min();
};

LogHeader parse_header_line(const std::string& line);
LogEntry parse_entry_line(const std::string& line, std::size_t line_no);

/// Reads a whole log. Throws LogFormatError with the 1-based line number.
SessionLog read_session_log(std::istream& in);
SessionLog read_session_log(const std::filesystem::path& file);
void write_session_log(std::ostream& out, const SessionLog& log);

inline constexpr double kBatchSpeed = std::numeric_limits<double>::infinity();

/// Re-deliver a log's envelopes in order. Inter-arrival gaps (from rx_ms)
/// are slept scaled by 1/speed; an infinite speed delivers immediately.
/// Reads lazily: a corrupted line halts replay after the lines before it
/// were delivered, with a LogFormatError carrying the line number.
/// Returns the number of envelopes delivered.
std::size_t replay(std::istream& in, double speed, const std::function<void(const Envelope&)>& sink,
                   LogHeader* header_out = nullptr);
std::size_t replay(const SessionLog& log, double speed, const std::function<void(const Envelope&)>& sink);

/// Convenience sink: publish into a broker.
std::function<void(const Envelope&)> publish_into(Broker& broker);

}  // namespace tims::bus
