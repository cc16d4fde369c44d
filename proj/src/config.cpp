#include "quadlearn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace quadlearn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& raw) {
  try {
    size_t pos = 0;
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw invalid_config_error("key '" + key + "' has non-numeric value '" + raw + "'");
  }
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw invalid_config_error("line " + std::to_string(lineno) +
                                 ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw invalid_config_error("line " + std::to_string(lineno) + ": empty key");
    }
    c.kv_[key] = value;
  }
  return c;
}

Config Config::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw io_error("cannot open config file " + file.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const Error& e) {
    throw invalid_config_error(file.string() + ": " + e.what());
  }
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw invalid_config_error("missing required key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  return parse_double(key, get_string(key));
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : parse_double(key, it->second);
}

long long Config::get_int(const std::string& key) const {
  const double v = get_double(key);
  const auto r = static_cast<long long>(v);
  if (static_cast<double>(r) != v) {
    throw invalid_config_error("key '" + key + "' is not an integer");
  }
  return r;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw invalid_config_error("key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> Config::get_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<double> out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(parse_double(key, trim(item)));
  }
  if (out.empty()) throw invalid_config_error("key '" + key + "' has an empty list");
  return out;
}

Vec3 Config::get_vec3(const std::string& key, const Vec3& fallback) const {
  if (!has(key)) return fallback;
  const auto v = get_list(key);
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() != 3) {
    throw invalid_config_error("key '" + key + "' needs 1 or 3 components, got " +
                               std::to_string(v.size()));
  }
  return Vec3(v[0], v[1], v[2]);
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::vector<std::string> Config::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_) {
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  }
  return out;
}

NominalParams load_nominal_params(const Config& c, const std::string& prefix) {
  NominalParams p;
  p.m = c.get_double(prefix + "m", p.m);
  p.J = c.get_vec3(prefix + "J", p.J);
  if (c.has(prefix + "Jxx")) p.J.x() = c.get_double(prefix + "Jxx");
  if (c.has(prefix + "Jyy")) p.J.y() = c.get_double(prefix + "Jyy");
  if (c.has(prefix + "Jzz")) p.J.z() = c.get_double(prefix + "Jzz");
  p.k_f = c.get_double(prefix + "k_f", p.k_f);
  p.k_tau = c.get_double(prefix + "k_tau", p.k_tau);
  p.l = c.get_double(prefix + "l", p.l);
  p.g = c.get_double(prefix + "g", p.g);
  p.u_max = c.get_double(prefix + "u_max", p.u_max);
  if (p.m <= 0 || p.k_f <= 0 || p.g <= 0 || (p.J.array() <= 0).any() || p.l <= 0 ||
      p.u_max <= 0) {
    throw invalid_config_error("plant parameters must be positive");
  }
  return p;
}

AeroParams load_aero_params(const Config& c, const std::string& prefix) {
  AeroParams a;
  a.d_lin = c.get_vec3(prefix + "d_lin", a.d_lin);
  a.d_quad = c.get_vec3(prefix + "d_quad", a.d_quad);
  a.d_omega = c.get_vec3(prefix + "d_omega", a.d_omega);
  a.thrust_sag = c.get_double(prefix + "thrust_sag", a.thrust_sag);
  if ((a.d_lin.array() < 0).any() || (a.d_quad.array() < 0).any() ||
      (a.d_omega.array() < 0).any() || a.thrust_sag < 0) {
    throw invalid_config_error("aero parameters must be non-negative");
  }
  return a;
}

}  // namespace quadlearn
