#include "tims/orchestrator/config.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tims {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Strip a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    kv.values_[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : unquote(it->second);
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

std::int64_t KeyValueFile::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
  }
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + it->second + "'");
}

Vec3 KeyValueFile::get_vec3(const std::string& key, const Vec3& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw ConfigError("config key '" + key + "': expected [x, y, z]");
  std::istringstream in(v.substr(1, v.size() - 2));
  Vec3 out;
  std::string part;
  int i = 0;
  while (std::getline(in, part, ',')) {
    if (i >= 3) throw ConfigError("config key '" + key + "': expected exactly 3 components");
    out(i++) = parse_double(key, trim(part));
  }
  if (i != 3) throw ConfigError("config key '" + key + "': expected exactly 3 components");
  return out;
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_) out.push_back(k);
  return out;
}

SessionConfig session_config_from(const KeyValueFile& kv) {
  static const std::vector<std::string> known = {
      "setting", "trial_id", "tick_hz", "log_dir", "phantom.file",
      "mapping.alpha", "mapping.workspace_min_um", "mapping.workspace_max_um",
      "guidance.threshold_um", "guidance.gain", "guidance.max_force_n", "guidance.mode", "guidance.sign",
      "safety.penetration_limit_um", "safety.fixture_gain",
      "tactile.tau_inflate_ms", "tactile.tau_deflate_ms",
      "operator.kind", "operator.noise_sigma_um", "operator.beta", "operator.seed", "operator.aim_correlation",
      "operator.compliance_leak", "operator.deviant_bias_um", "operator.learner_gamma", "operator.completed_trials",
      "operator.tactile_threshold", "operator.tactile_lift_step_um", "operator.tactile_lift_max_um",
      "operator.tactile_lift_decay", "operator.probe_step_um",
      "task.ticks_per_index", "task.approach_ticks", "task.descent_ticks", "task.dwell_ticks",
      "task.contact_press_ticks", "task.max_probe_ticks", "task.lift_ticks",
      "guide.file", "guide.demos", "guide.resample_n", "guide.demo_seed", "guide.clearance_um", "guide.demo_noise_um"};
  for (const auto& k : kv.keys())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");

  SessionConfig c;
  c.setting = setting_from_string(kv.get_string("setting", to_string(c.setting)));
  c.trial_id = kv.get_string("trial_id", "");
  c.tick_hz = kv.get_double("tick_hz", c.tick_hz);
  c.log_dir = kv.get_string("log_dir", "");
  c.phantom_file = kv.get_string("phantom.file", "");

  c.mapping.alpha = kv.get_double("mapping.alpha", c.mapping.alpha);
  c.mapping.workspace_min = kv.get_vec3("mapping.workspace_min_um", c.mapping.workspace_min);
  c.mapping.workspace_max = kv.get_vec3("mapping.workspace_max_um", c.mapping.workspace_max);

  c.guidance.deviation_threshold = kv.get_double("guidance.threshold_um", c.guidance.deviation_threshold);
  c.guidance.force_gain = kv.get_double("guidance.gain", c.guidance.force_gain);
  c.guidance.max_force = kv.get_double("guidance.max_force_n", c.guidance.max_force);
  const auto mode = kv.get_string("guidance.mode", "full_scan");
  if (mode == "full_scan") c.guidance.progress_mode = ProgressMode::kFullScan;
  else if (mode == "monotone") c.guidance.progress_mode = ProgressMode::kMonotone;
  else throw ConfigError("guidance.mode must be full_scan or monotone");
  const auto sign = kv.get_string("guidance.sign", "restoring");
  if (sign == "restoring") c.guidance.sign = SignConvention::kRestoring;
  else if (sign == "literal") c.guidance.sign = SignConvention::kLiteral;
  else throw ConfigError("guidance.sign must be restoring or literal");

  c.safety.penetration_limit = kv.get_double("safety.penetration_limit_um", c.safety.penetration_limit);
  c.safety.fixture_gain = kv.get_double("safety.fixture_gain", c.safety.fixture_gain);
  c.tactile.tau_inflate_ms = kv.get_double("tactile.tau_inflate_ms", c.tactile.tau_inflate_ms);
  c.tactile.tau_deflate_ms = kv.get_double("tactile.tau_deflate_ms", c.tactile.tau_deflate_ms);

  auto& op = c.op;
  op.kind = operator_kind_from_string(kv.get_string("operator.kind", to_string(op.kind)));
  op.noise_sigma_um = kv.get_double("operator.noise_sigma_um", op.noise_sigma_um);
  op.beta = kv.get_double("operator.beta", op.beta);
  op.seed = static_cast<std::uint64_t>(kv.get_int("operator.seed", static_cast<std::int64_t>(op.seed)));
  op.aim_correlation = kv.get_double("operator.aim_correlation", op.aim_correlation);
  op.compliance_leak = kv.get_double("operator.compliance_leak", op.compliance_leak);
  op.deviant_bias_um = kv.get_double("operator.deviant_bias_um", op.deviant_bias_um);
  op.learner_gamma = kv.get_double("operator.learner_gamma", op.learner_gamma);
  op.completed_guided_trials = static_cast<int>(kv.get_int("operator.completed_trials", op.completed_guided_trials));
  op.tactile_threshold = kv.get_double("operator.tactile_threshold", op.tactile_threshold);
  op.tactile_lift_step_um = kv.get_double("operator.tactile_lift_step_um", op.tactile_lift_step_um);
  op.tactile_lift_max_um = kv.get_double("operator.tactile_lift_max_um", op.tactile_lift_max_um);
  op.tactile_lift_decay = kv.get_double("operator.tactile_lift_decay", op.tactile_lift_decay);
  op.probe_step_um = kv.get_double("operator.probe_step_um", op.probe_step_um);

  auto& t = c.task;
  t.ticks_per_index = static_cast<int>(kv.get_int("task.ticks_per_index", t.ticks_per_index));
  t.approach_ticks = static_cast<int>(kv.get_int("task.approach_ticks", t.approach_ticks));
  t.descent_ticks = static_cast<int>(kv.get_int("task.descent_ticks", t.descent_ticks));
  t.dwell_ticks = static_cast<int>(kv.get_int("task.dwell_ticks", t.dwell_ticks));
  t.contact_press_ticks = static_cast<int>(kv.get_int("task.contact_press_ticks", t.contact_press_ticks));
  t.max_probe_ticks = static_cast<int>(kv.get_int("task.max_probe_ticks", t.max_probe_ticks));
  t.lift_ticks = static_cast<int>(kv.get_int("task.lift_ticks", t.lift_ticks));

  auto& g = c.guide;
  g.file = kv.get_string("guide.file", "");
  g.demo_count = static_cast<int>(kv.get_int("guide.demos", g.demo_count));
  g.resample_count = static_cast<int>(kv.get_int("guide.resample_n", g.resample_count));
  g.demo_seed = static_cast<std::uint64_t>(kv.get_int("guide.demo_seed", static_cast<std::int64_t>(g.demo_seed)));
  g.clearance_um = kv.get_double("guide.clearance_um", g.clearance_um);
  g.demo_noise_um = kv.get_double("guide.demo_noise_um", g.demo_noise_um);

  c.validate();
  return c;
}

SessionConfig load_session_config(const std::filesystem::path& file) {
  return session_config_from(KeyValueFile::load(file));
}

void SessionConfig::validate() const {
  mapping.validate();
  guidance.validate();
  safety.validate();
  tactile.validate();
  op.validate();
  // Timestamps are whole milliseconds.
  if (!(tick_hz > 0 && tick_hz <= 1000)) throw ConfigError("tick_hz must be in (0, 1000]");
  const auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("task.") + name + " must be >= 1");
  };
  positive(task.ticks_per_index, "ticks_per_index");
  positive(task.approach_ticks, "approach_ticks");
  positive(task.descent_ticks, "descent_ticks");
  positive(task.dwell_ticks, "dwell_ticks");
  positive(task.contact_press_ticks, "contact_press_ticks");
  positive(task.max_probe_ticks, "max_probe_ticks");
  positive(task.lift_ticks, "lift_ticks");
  if (guide.file.empty()) {
    if (guide.demo_count < 1) throw ConfigError("guide.demos must be >= 1");
    if (guide.resample_count < 2) throw ConfigError("guide.resample_n must be >= 2");
    if (!(guide.clearance_um >= 0)) throw ConfigError("guide.clearance_um must be >= 0");
    if (!(guide.demo_noise_um >= 0)) throw ConfigError("guide.demo_noise_um must be >= 0");
  }
}

std::string SessionConfig::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto v3 = [&](const Vec3& v) { os << '[' << v.x() << ',' << v.y() << ',' << v.z() << ']'; };
  os << "setting=" << to_string(setting) << ";tick_hz=" << tick_hz
     << ";phantom=" << phantom_file.string() << ";alpha=" << mapping.alpha << ";ws_min=";
  v3(mapping.workspace_min);
  os << ";ws_max=";
  v3(mapping.workspace_max);
  os << ";threshold=" << guidance.deviation_threshold << ";gain=" << guidance.force_gain
     << ";max_force=" << guidance.max_force << ";mode=" << static_cast<int>(guidance.progress_mode)
     << ";sign=" << static_cast<int>(guidance.sign) << ";pen_limit=" << safety.penetration_limit
     << ";fixture_gain=" << safety.fixture_gain << ";tau_in=" << tactile.tau_inflate_ms
     << ";tau_out=" << tactile.tau_deflate_ms << ";op=" << to_string(op.kind) << ";sigma=" << op.noise_sigma_um
     << ";beta=" << op.beta << ";seed=" << op.seed << ";rho=" << op.aim_correlation
     << ";leak=" << op.compliance_leak << ";bias=" << op.deviant_bias_um << ";gamma=" << op.learner_gamma
     << ";completed=" << op.completed_guided_trials << ";tthr=" << op.tactile_threshold
     << ";lift=" << op.tactile_lift_step_um << ',' << op.tactile_lift_max_um << ',' << op.tactile_lift_decay
     << ";probe=" << op.probe_step_um << ";task=" << task.ticks_per_index << ',' << task.approach_ticks << ','
     << task.descent_ticks << ',' << task.dwell_ticks << ',' << task.contact_press_ticks << ','
     << task.max_probe_ticks << ',' << task.lift_ticks << ";guide=" << guide.file.string() << ','
     << guide.demo_count << ',' << guide.resample_count << ',' << guide.demo_seed << ',' << guide.clearance_um
     << ',' << guide.demo_noise_um;
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string SessionConfig::hash() const { return fnv1a_hex(canonical()); }

}  // namespace tims
