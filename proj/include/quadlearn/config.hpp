#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadlearn/types.hpp"

namespace quadlearn {

// Flat key=value configuration.  Lines are `key = value`; `#` starts a
// comment; keys are dotted paths like `plant.m` or `aero.d_lin`.  Vector
// values are comma-separated.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& file);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  std::vector<double> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // Keys that start with `prefix`, in file order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Reads plant.* keys (m, J, k_f, k_tau, l, g, u_max); missing keys keep the
// NominalParams defaults.  Throws invalid-config on non-positive m/k_f/g.
NominalParams load_nominal_params(const Config& c, const std::string& prefix = "plant.");

// Reads aero.* keys (d_lin, d_quad, d_omega, thrust_sag); defaults to zero.
AeroParams load_aero_params(const Config& c, const std::string& prefix = "aero.");

}  // namespace quadlearn
