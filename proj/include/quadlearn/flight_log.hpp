#pragma once

#include <filesystem>
#include <vector>

#include "quadlearn/trajectory.hpp"
#include "quadlearn/types.hpp"

namespace quadlearn {

// One recorded flight: uniform 100 Hz samples of state, motor command and the
// plant's exact accelerations, plus enough metadata to reproduce the run.
struct FlightLog {
  std::vector<double> t;
  std::vector<QuadState> state;
  std::vector<Control> input;  // rpm
  std::vector<Vec3> dv;        // ground-truth dv/dt at each sample
  std::vector<Vec3> domega;

  TrajectorySpec spec;
  NominalParams plant;
  AeroParams aero;
  uint64_t seed = 0;
  double sample_hz = 100.0;

  std::size_t size() const { return t.size(); }

  // Same-length series, strictly increasing uniform timestamps, finite
  // entries.  Throws invalid-argument on violation.
  void validate() const;
};

// Persists `<stem>.csv` (one row per sample: t, p, v, q, omega, u, dv,
// domega; %.17g so reload is bit exact) and `<stem>.json` (trajectory spec,
// plant and aero parameters, seed, rate, schema version).
void save_flight_log(const FlightLog& log, const std::filesystem::path& stem);
FlightLog load_flight_log(const std::filesystem::path& stem);

}  // namespace quadlearn
