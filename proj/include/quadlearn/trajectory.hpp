#pragma once

#include <string>

#include "quadlearn/config.hpp"
#include "quadlearn/dynamics.hpp"
#include "quadlearn/types.hpp"

namespace quadlearn {

enum class TrajectoryFamily {
  Line,
  Ellipse,
  WarpedEllipse,
  Lemniscate,
  ExtendedLemniscate,
  Parabola,
  TransposedParabola,
};

enum class Plane { XY, XZ, YZ };

// Parametric reference path.  amplitudes = (a, b, c): a and b scale the two
// in-plane coordinates, c is a constant offset along the remaining axis.
struct TrajectorySpec {
  TrajectoryFamily family = TrajectoryFamily::Line;
  Vec3 amplitudes = Vec3::Zero();
  double omega = 1.0;      // angular rate [rad/s]
  Plane plane = Plane::XY;
  double duration = 10.0;  // [s]
  double phase = 0.0;      // [rad]
};

struct Reference {
  QuadState state;      // desired p, v; identity attitude, zero rates
  Control feedforward;  // hover input for the given params
};

// Position and analytic velocity of the reference at time t, with fixed yaw
// and hover feedforward.  Throws invalid-argument outside [0, duration] or
// for an invalid spec.
Reference make_reference(const TrajectorySpec& spec, double t, const NominalParams& params);

std::string family_to_string(TrajectoryFamily f);
TrajectoryFamily family_from_string(const std::string& s);
std::string plane_to_string(Plane p);
Plane plane_from_string(const std::string& s);

// Reads `<prefix>family`, `<prefix>amplitudes`, `<prefix>omega`,
// `<prefix>plane`, `<prefix>duration`, `<prefix>phase`.
TrajectorySpec trajectory_from_config(const Config& c, const std::string& prefix);

}  // namespace quadlearn
