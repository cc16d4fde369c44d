#include "quadlearn/flight_log.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "quadlearn/errors.hpp"

namespace quadlearn {

namespace {

constexpr int kSchemaVersion = 1;
constexpr const char* kCsvHeader =
    "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,u0,u1,u2,u3,dvx,dvy,dvz,dwx,dwy,dwz";
constexpr int kColumns = 24;

void append_g17(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

nlohmann::ordered_json vec3_json(const Vec3& v) {
  return nlohmann::ordered_json::array({v.x(), v.y(), v.z()});
}

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw io_error("expected a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void FlightLog::validate() const {
  const std::size_t n = t.size();
  if (state.size() != n || input.size() != n || dv.size() != n || domega.size() != n) {
    throw invalid_argument_error("flight log series lengths disagree");
  }
  if (!(sample_hz > 0.0)) throw invalid_argument_error("sample rate must be positive");
  const double dt = 1.0 / sample_hz;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t[i])) throw invalid_argument_error("non-finite timestamp");
    if (i > 0) {
      if (t[i] <= t[i - 1]) throw invalid_argument_error("timestamps must increase");
      if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9) {
        throw invalid_argument_error("timestamps must be uniform at the sample rate");
      }
    }
    if (!state[i].p.allFinite() || !state[i].v.allFinite() ||
        !std::isfinite(state[i].q.norm()) || !state[i].omega.allFinite() ||
        !input[i].allFinite() || !dv[i].allFinite() || !domega[i].allFinite()) {
      throw invalid_argument_error("non-finite log entry at sample " + std::to_string(i));
    }
  }
}

void save_flight_log(const FlightLog& log, const std::filesystem::path& stem) {
  log.validate();

  std::string csv;
  csv.reserve(log.size() * 24 * 20 + 64);
  csv += kCsvHeader;
  csv += '\n';
  for (std::size_t i = 0; i < log.size(); ++i) {
    double row[kColumns];
    int k = 0;
    row[k++] = log.t[i];
    for (int a = 0; a < 3; ++a) row[k++] = log.state[i].p(a);
    for (int a = 0; a < 3; ++a) row[k++] = log.state[i].v(a);
    row[k++] = log.state[i].q.w;
    row[k++] = log.state[i].q.x;
    row[k++] = log.state[i].q.y;
    row[k++] = log.state[i].q.z;
    for (int a = 0; a < 3; ++a) row[k++] = log.state[i].omega(a);
    for (int a = 0; a < 4; ++a) row[k++] = log.input[i](a);
    for (int a = 0; a < 3; ++a) row[k++] = log.dv[i](a);
    for (int a = 0; a < 3; ++a) row[k++] = log.domega[i](a);
    for (int c = 0; c < kColumns; ++c) {
      if (c) csv += ',';
      append_g17(csv, row[c]);
    }
    csv += '\n';
  }

  const std::filesystem::path csv_path = stem.string() + ".csv";
  const std::filesystem::path json_path = stem.string() + ".json";
  {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw io_error("cannot write " + csv_path.string());
    f << csv;
    if (!f) throw io_error("failed writing " + csv_path.string());
  }

  nlohmann::ordered_json j;
  j["format"] = "quadlearn-flightlog";
  j["schema_version"] = kSchemaVersion;
  j["csv"] = csv_path.filename().string();
  j["samples"] = log.size();
  j["sample_hz"] = log.sample_hz;
  j["seed"] = log.seed;
  j["trajectory"] = {
      {"family", family_to_string(log.spec.family)},
      {"amplitudes", vec3_json(log.spec.amplitudes)},
      {"omega", log.spec.omega},
      {"plane", plane_to_string(log.spec.plane)},
      {"duration", log.spec.duration},
      {"phase", log.spec.phase},
  };
  j["plant"] = {
      {"m", log.plant.m},          {"J", vec3_json(log.plant.J)},
      {"k_f", log.plant.k_f},      {"k_tau", log.plant.k_tau},
      {"l", log.plant.l},          {"g", log.plant.g},
      {"u_max", log.plant.u_max},
  };
  j["aero"] = {
      {"d_lin", vec3_json(log.aero.d_lin)},
      {"d_quad", vec3_json(log.aero.d_quad)},
      {"d_omega", vec3_json(log.aero.d_omega)},
      {"thrust_sag", log.aero.thrust_sag},
  };
  {
    std::ofstream f(json_path, std::ios::binary);
    if (!f) throw io_error("cannot write " + json_path.string());
    f << j.dump(2) << '\n';
    if (!f) throw io_error("failed writing " + json_path.string());
  }
}

FlightLog load_flight_log(const std::filesystem::path& stem) {
  const std::filesystem::path csv_path = stem.string() + ".csv";
  const std::filesystem::path json_path = stem.string() + ".json";

  nlohmann::json j;
  {
    std::ifstream f(json_path);
    if (!f) throw io_error("cannot open " + json_path.string());
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw io_error(json_path.string() + ": " + e.what());
    }
  }
  FlightLog log;
  try {
    if (j.at("format") != "quadlearn-flightlog") {
      throw io_error(json_path.string() + ": not a flight log manifest");
    }
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw io_error(json_path.string() + ": unsupported schema version");
    }
    log.sample_hz = j.at("sample_hz").get<double>();
    log.seed = j.at("seed").get<uint64_t>();
    const auto& traj = j.at("trajectory");
    log.spec.family = family_from_string(traj.at("family").get<std::string>());
    log.spec.amplitudes = vec3_from_json(traj.at("amplitudes"));
    log.spec.omega = traj.at("omega").get<double>();
    log.spec.plane = plane_from_string(traj.at("plane").get<std::string>());
    log.spec.duration = traj.at("duration").get<double>();
    log.spec.phase = traj.at("phase").get<double>();
    const auto& plant = j.at("plant");
    log.plant.m = plant.at("m").get<double>();
    log.plant.J = vec3_from_json(plant.at("J"));
    log.plant.k_f = plant.at("k_f").get<double>();
    log.plant.k_tau = plant.at("k_tau").get<double>();
    log.plant.l = plant.at("l").get<double>();
    log.plant.g = plant.at("g").get<double>();
    log.plant.u_max = plant.at("u_max").get<double>();
    const auto& aero = j.at("aero");
    log.aero.d_lin = vec3_from_json(aero.at("d_lin"));
    log.aero.d_quad = vec3_from_json(aero.at("d_quad"));
    log.aero.d_omega = vec3_from_json(aero.at("d_omega"));
    log.aero.thrust_sag = aero.at("thrust_sag").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(json_path.string() + ": " + e.what());
  }

  std::ifstream f(csv_path);
  if (!f) throw io_error("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(f, line) || line != kCsvHeader) {
    throw io_error(csv_path.string() + ": unexpected CSV header");
  }
  std::size_t row_no = 1;
  while (std::getline(f, line)) {
    ++row_no;
    if (line.empty()) continue;
    double row[kColumns];
    const char* p = line.c_str();
    for (int c = 0; c < kColumns; ++c) {
      char* end = nullptr;
      row[c] = std::strtod(p, &end);
      if (end == p) {
        throw io_error(csv_path.string() + ":" + std::to_string(row_no) +
                       ": malformed number in column " + std::to_string(c));
      }
      p = end;
      if (c + 1 < kColumns) {
        if (*p != ',') {
          throw io_error(csv_path.string() + ":" + std::to_string(row_no) +
                         ": expected " + std::to_string(kColumns) + " columns");
        }
        ++p;
      }
    }
    if (*p != '\0') {
      throw io_error(csv_path.string() + ":" + std::to_string(row_no) +
                     ": trailing characters");
    }
    int k = 0;
    log.t.push_back(row[k++]);
    QuadState x;
    for (int a = 0; a < 3; ++a) x.p(a) = row[k++];
    for (int a = 0; a < 3; ++a) x.v(a) = row[k++];
    x.q.w = row[k++];
    x.q.x = row[k++];
    x.q.y = row[k++];
    x.q.z = row[k++];
    for (int a = 0; a < 3; ++a) x.omega(a) = row[k++];
    log.state.push_back(x);
    Control u;
    for (int a = 0; a < 4; ++a) u(a) = row[k++];
    log.input.push_back(u);
    Vec3 a3;
    for (int a = 0; a < 3; ++a) a3(a) = row[k++];
    log.dv.push_back(a3);
    for (int a = 0; a < 3; ++a) a3(a) = row[k++];
    log.domega.push_back(a3);
  }

  log.validate();
  return log;
}

}  // namespace quadlearn
