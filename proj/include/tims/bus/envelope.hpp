#pragma once

#include "tims/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tims::bus {

using nlohmann::json;

/// The bus wire unit. On the wire: {"device":..,"seq":..,"ts":..,"payload":{..}}.
struct Envelope {
  std::string device_id;
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  json payload = json::object();

  bool operator==(const Envelope&) const = default;
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& what) : Error("schema", what) {}
};

json envelope_to_json(const Envelope& env);
/// Structural decode only; payload schemas are checked by the broker.
Envelope envelope_from_json(const json& j);

/// 4-byte big-endian length prefix followed by UTF-8 JSON bytes.
std::string encode_frame(std::string_view body);

/// Incremental decoder for the length-prefixed stream.
class FrameDecoder {
 public:
  static constexpr std::uint32_t kMaxFrame = 16u << 20;

  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete frame body, if any. Throws on an oversize length prefix.
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

}  // namespace tims::bus
