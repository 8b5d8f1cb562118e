#include "tims/phantom.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tims {

using nlohmann::json;

void Phantom::validate() const {
  if (!(sphere.radius > 0)) throw ConfigError("phantom radius must be > 0");
  if (!sphere.center.allFinite()) throw ConfigError("phantom center must be finite");
  if (!(contact_tolerance >= 0)) throw ConfigError("phantom contact_tolerance must be >= 0");
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < vessel.size(); ++i)
    if (!vessel[i].allFinite() || std::abs(sphere.signed_distance(vessel[i])) > contact_tolerance) bad.push_back(i);
  if (!bad.empty()) {
    std::ostringstream os;
    os << "vessel points off the phantom surface (tolerance " << contact_tolerance << " um) at indices:";
    for (auto i : bad) os << ' ' << i;
    throw ConfigError(os.str());
  }
  for (std::size_t i = 0; i < clots.size(); ++i) {
    if (!(clots[i].radius > 0)) throw ConfigError("clot " + std::to_string(i) + " radius must be > 0");
    if (!clots[i].position.allFinite() ||
        std::abs(sphere.signed_distance(clots[i].position)) > contact_tolerance)
      throw ConfigError("clot " + std::to_string(i) + " is not on the phantom surface");
  }
}

Phantom default_phantom(int vessel_points) {
  if (vessel_points < 2) throw ConfigError("vessel needs at least 2 points");
  Phantom ph;
  const Vec3 mid = Vec3(0.15, -0.1, 1.0).normalized();
  const Vec3 dir = Vec3(1.0, 0.35, 0.0);
  const Vec3 tangent = (dir - dir.dot(mid) * mid).normalized();
  const double half = std::numbers::pi / 6.0;  // 60 degree arc
  ph.vessel.reserve(static_cast<std::size_t>(vessel_points));
  for (int i = 0; i < vessel_points; ++i) {
    const double phi = -half + 2.0 * half * i / (vessel_points - 1);
    ph.vessel.push_back(ph.sphere.center + ph.sphere.radius * (std::cos(phi) * mid + std::sin(phi) * tangent));
  }
  for (double frac : {0.35, 0.8}) {
    const auto idx = static_cast<std::size_t>(std::lround(frac * (vessel_points - 1)));
    ph.clots.push_back({ph.vessel[idx], 250.0, false});
  }
  return ph;
}

namespace {

Vec3 vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string("phantom: ") + what + " must be [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

Phantom phantom_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("phantom: invalid JSON: ") + e.what());
  }
  Phantom ph;
  try {
    ph.sphere.center = vec_from(j.at("center_um"), "center_um");
    ph.sphere.radius = j.at("radius_um").get<double>();
    ph.contact_tolerance = j.value("contact_tolerance_um", 20.0);
    for (const auto& p : j.at("vessel")) ph.vessel.push_back(vec_from(p, "vessel point"));
    for (const auto& c : j.at("clots")) {
      Clot clot;
      clot.position = vec_from(c.at("position_um"), "clot position_um");
      clot.radius = c.value("radius_um", 250.0);
      ph.clots.push_back(clot);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("phantom: ") + e.what());
  }
  ph.validate();
  return ph;
}

Phantom load_phantom(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open phantom file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return phantom_from_json_text(ss.str());
}

std::string phantom_to_json_text(const Phantom& ph) {
  json j;
  j["center_um"] = vec_to(ph.sphere.center);
  j["radius_um"] = ph.sphere.radius;
  j["contact_tolerance_um"] = ph.contact_tolerance;
  j["vessel"] = json::array();
  for (const auto& p : ph.vessel) j["vessel"].push_back(vec_to(p));
  j["clots"] = json::array();
  for (const auto& c : ph.clots) j["clots"].push_back({{"position_um", vec_to(c.position)}, {"radius_um", c.radius}});
  return j.dump(2);
}

ContactState contact_query(const Vec3& tool_tip, const Phantom& phantom) {
  const Vec3 r = tool_tip - phantom.sphere.center;
  const double dist = r.norm();
  if (!(dist > 0)) throw DegenerateNormalError("contact_query: tool tip at the phantom center");
  ContactState out;
  out.touching = dist <= phantom.sphere.radius + phantom.contact_tolerance;
  out.penetration = std::max(0.0, phantom.sphere.radius - dist);
  out.contact_point = phantom.sphere.center + r * (phantom.sphere.radius / dist);
  return out;
}

InsertionResult attempt_insertion(const Vec3& tool_tip, Phantom& phantom) {
  std::optional<std::size_t> best;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < phantom.clots.size(); ++i) {
    if (phantom.clots[i].punctured) continue;
    const double d = (tool_tip - phantom.clots[i].position).norm();
    if (!best || d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  if (!best) throw NoTargetError("attempt_insertion: every clot is already punctured");
  InsertionResult out;
  out.target = *best;
  out.miss_distance = best_dist;
  if (best_dist <= phantom.clots[*best].radius) {
    phantom.clots[*best].punctured = true;
    out.hit = *best;
  }
  return out;
}

SceneFrame step_scene(SceneState& state, const Vec3& follower_position, std::int64_t dt_ms) {
  if (dt_ms <= 0) throw ValidationError("step_scene: dt_ms must be positive");
  state.timestamp_ms += dt_ms;
  ++state.frame_seq;
  ContactState contact;
  if ((follower_position - state.phantom.sphere.center).norm() > 0) {
    contact = state.estimator->estimate(follower_position, state.phantom);
  } else {
    contact = {true, state.phantom.sphere.radius, state.phantom.sphere.center + Vec3::UnitZ() * state.phantom.sphere.radius};
  }
  state.last_contact = contact;
  SceneFrame frame;
  frame.tool_tip = follower_position;
  frame.contact = contact;
  frame.clot_states.reserve(state.phantom.clots.size());
  for (const auto& c : state.phantom.clots) frame.clot_states.push_back(c.punctured);
  frame.frame_seq = state.frame_seq;
  frame.timestamp_ms = state.timestamp_ms;
  return frame;
}

}  // namespace tims
