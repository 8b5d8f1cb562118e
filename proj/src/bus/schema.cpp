#include "tims/bus/schema.hpp"

#include <algorithm>

namespace tims::bus {

// Generated from schemas/*.json at configure time.
const std::vector<std::pair<std::string, std::string>>& embedded_schemas();

namespace {

bool type_matches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

void check(const json& schema, const json& v, const std::string& path, std::vector<std::string>& out) {
  if (const auto t = schema.find("type"); t != schema.end()) {
    const auto type = t->get<std::string>();
    if (!type_matches(type, v)) {
      out.push_back(path + ": expected " + type);
      return;
    }
  }
  if (const auto e = schema.find("enum"); e != schema.end()) {
    if (std::find(e->begin(), e->end(), v) == e->end()) out.push_back(path + ": value " + v.dump() + " not allowed");
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (const auto m = schema.find("minimum"); m != schema.end() && x < m->get<double>())
      out.push_back(path + ": below minimum " + m->dump());
    if (const auto m = schema.find("maximum"); m != schema.end() && x > m->get<double>())
      out.push_back(path + ": above maximum " + m->dump());
  }
  if (v.is_string()) {
    if (const auto m = schema.find("minLength"); m != schema.end() && v.get<std::string>().size() < m->get<std::size_t>())
      out.push_back(path + ": shorter than " + m->dump());
  }
  if (v.is_array()) {
    if (const auto m = schema.find("minItems"); m != schema.end() && v.size() < m->get<std::size_t>())
      out.push_back(path + ": fewer than " + m->dump() + " items");
    if (const auto m = schema.find("maxItems"); m != schema.end() && v.size() > m->get<std::size_t>())
      out.push_back(path + ": more than " + m->dump() + " items");
    if (const auto items = schema.find("items"); items != schema.end())
      for (std::size_t i = 0; i < v.size(); ++i) check(*items, v[i], path + "[" + std::to_string(i) + "]", out);
  }
  if (v.is_object()) {
    if (const auto req = schema.find("required"); req != schema.end())
      for (const auto& name : *req)
        if (!v.contains(name.get<std::string>())) out.push_back(path + "." + name.get<std::string>() + ": required");
    const auto props = schema.find("properties");
    const bool closed = schema.value("additionalProperties", true) == false;
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (props != schema.end() && props->contains(it.key())) {
        check((*props)[it.key()], it.value(), path + "." + it.key(), out);
      } else if (closed) {
        out.push_back(path + "." + it.key() + ": unexpected field");
      }
    }
  }
}

}  // namespace

std::vector<std::string> schema_violations(const json& schema, const json& value, const std::string& path) {
  std::vector<std::string> out;
  check(schema, value, path, out);
  return out;
}

const SchemaRegistry& SchemaRegistry::builtin() {
  static const SchemaRegistry registry = [] {
    SchemaRegistry r;
    for (const auto& [name, text] : embedded_schemas())
      if (name != "envelope") r.add(name, json::parse(text));
    return r;
  }();
  return registry;
}

const json* SchemaRegistry::find(const std::string& device) const {
  const auto it = schemas_.find(device);
  return it == schemas_.end() ? nullptr : &it->second;
}

std::vector<std::string> SchemaRegistry::devices() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : schemas_) out.push_back(k);
  return out;
}

void SchemaRegistry::validate(const Envelope& env) const {
  if (env.device_id.empty()) throw SchemaError("envelope.device: must be non-empty");
  if (!env.payload.is_object()) throw SchemaError("envelope.payload: expected object");
  const json* schema = find(env.device_id);
  if (!schema) return;
  const auto errors = schema_violations(*schema, env.payload, env.device_id + ".payload");
  if (errors.empty()) return;
  std::string msg = "schema violation:";
  for (const auto& e : errors) msg += " " + e + ";";
  msg.pop_back();
  throw SchemaError(msg);
}

}  // namespace tims::bus
