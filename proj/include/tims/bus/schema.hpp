#pragma once

#include "tims/bus/envelope.hpp"

#include <map>
#include <string>
#include <vector>

namespace tims::bus {

/// Validate `value` against the JSON-Schema subset the payload schemas use
/// (type, required, properties, additionalProperties=false, items,
/// minItems/maxItems, minimum/maximum, minLength, enum). Returns one message
/// per violation, each prefixed with the offending field path.
std::vector<std::string> schema_violations(const json& schema, const json& value, const std::string& path);

/// Device id -> payload schema. Devices without a schema accept any object.
class SchemaRegistry {
 public:
  /// The schemas shipped under schemas/, compiled into the library.
  static const SchemaRegistry& builtin();

  void add(const std::string& device, json schema) { schemas_[device] = std::move(schema); }
  bool has(const std::string& device) const { return schemas_.count(device) != 0; }
  const json* find(const std::string& device) const;
  std::vector<std::string> devices() const;

  /// Throws SchemaError listing every field-level violation.
  void validate(const Envelope& env) const;

 private:
  std::map<std::string, json> schemas_;
};

}  // namespace tims::bus
