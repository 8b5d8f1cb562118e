#include "tims/bus/envelope.hpp"

namespace tims::bus {

json envelope_to_json(const Envelope& env) {
  return json{{"device", env.device_id}, {"seq", env.seq}, {"ts", env.timestamp_ms}, {"payload", env.payload}};
}

Envelope envelope_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("envelope: expected a JSON object");
  Envelope env;
  const auto dev = j.find("device");
  if (dev == j.end() || !dev->is_string()) throw SchemaError("envelope.device: required string");
  env.device_id = dev->get<std::string>();
  if (env.device_id.empty()) throw SchemaError("envelope.device: must be non-empty");
  const auto seq = j.find("seq");
  if (seq == j.end() || !seq->is_number_integer() || (!seq->is_number_unsigned() && seq->get<std::int64_t>() < 0))
    throw SchemaError("envelope.seq: required non-negative integer");
  env.seq = seq->get<std::uint64_t>();
  const auto ts = j.find("ts");
  if (ts == j.end() || !ts->is_number_integer()) throw SchemaError("envelope.ts: required integer");
  env.timestamp_ms = ts->get<std::int64_t>();
  const auto payload = j.find("payload");
  if (payload == j.end() || !payload->is_object()) throw SchemaError("envelope.payload: required object");
  env.payload = *payload;
  return env;
}

std::string encode_frame(std::string_view body) {
  if (body.size() > FrameDecoder::kMaxFrame) throw SchemaError("frame exceeds the 16 MiB limit");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(body.size() + 4);
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

std::optional<std::string> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  const auto b = [&](int i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer_[static_cast<std::size_t>(i)])); };
  const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (n > kMaxFrame) throw SchemaError("frame length " + std::to_string(n) + " exceeds the 16 MiB limit");
  if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string body = buffer_.substr(4, n);
  buffer_.erase(0, 4 + static_cast<std::size_t>(n));
  return body;
}

}  // namespace tims::bus
