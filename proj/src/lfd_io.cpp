#include "tims/lfd_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tims {

using nlohmann::json;

Path read_demo(std::istream& in, std::string* source_id) {
  Path pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("demo line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("schema")) {
      if (j["schema"] != kDemoSchema)
        throw ValidationError("demo line " + std::to_string(line_no) + ": unsupported schema " + j["schema"].dump());
      if (source_id) *source_id = j.value("source_id", "");
      continue;
    }
    try {
      pts.emplace_back(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>());
    } catch (const json::exception& e) {
      throw ValidationError("demo line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pts;
}

Path read_demo(const std::filesystem::path& file, std::string* source_id) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open demonstration " + file.string());
  std::string id;
  auto pts = read_demo(in, &id);
  if (source_id) *source_id = id.empty() ? file.stem().string() : id;
  return pts;
}

void write_demo(std::ostream& out, const Path& points, const std::string& source_id) {
  out << json{{"schema", kDemoSchema}, {"source_id", source_id}}.dump() << '\n';
  for (std::size_t i = 0; i < points.size(); ++i)
    out << json{{"t", i}, {"x", points[i].x()}, {"y", points[i].y()}, {"z", points[i].z()}}.dump() << '\n';
}

void write_guide_path(std::ostream& out, const GuidePath& guide,
                      const std::optional<std::array<GprHyperparams, 3>>& hyper) {
  json j{{"schema", kGuidePathSchema}, {"points", json::array()}, {"ci", json::array()}};
  for (const auto& p : guide.points) j["points"].push_back({p.x(), p.y(), p.z()});
  for (const auto& c : guide.ci_halfwidth) j["ci"].push_back({c.x(), c.y(), c.z()});
  if (hyper) {
    j["hyper"] = json::array();
    for (const auto& h : *hyper)
      j["hyper"].push_back(
          {{"length_scale", h.length_scale}, {"signal_variance", h.signal_variance}, {"noise_variance", h.noise_variance}});
  }
  out << j.dump() << '\n';
}

GuidePath read_guide_path(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("guide path: ") + e.what());
  }
  if (j.value("schema", "") != kGuidePathSchema)
    throw ValidationError(std::string("guide path: expected schema ") + kGuidePathSchema);
  GuidePath g;
  try {
    for (const auto& p : j.at("points")) g.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    for (const auto& p : j.at("ci")) g.ci_halfwidth.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("guide path: ") + e.what());
  }
  if (g.points.size() != g.ci_halfwidth.size()) throw ValidationError("guide path: points and ci lengths differ");
  if (g.points.empty()) throw ValidationError("guide path: no points");
  return g;
}

GuidePath read_guide_path(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open guide path " + file.string());
  return read_guide_path(in);
}

}  // namespace tims
