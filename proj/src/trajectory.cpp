#include "quadlearn/trajectory.hpp"

namespace quadlearn {

namespace {

constexpr double kWarp = 0.2;       // radius modulation of WarpedEllipse
constexpr double kHarmonic = 0.35;  // extra harmonic of ExtendedLemniscate

// In-plane curve (s1, s2) and its time derivative at path angle th = w t + phase.
void plane_curve(const TrajectorySpec& spec, double th, double& s1, double& s2,
                 double& ds1, double& ds2) {
  const double a = spec.amplitudes(0);
  const double b = spec.amplitudes(1);
  const double w = spec.omega;
  const double c = std::cos(th), s = std::sin(th);
  switch (spec.family) {
    case TrajectoryFamily::Line:
      s1 = a * s;
      s2 = 0.0;
      ds1 = a * w * c;
      ds2 = 0.0;
      return;
    case TrajectoryFamily::Ellipse:
      s1 = a * c;
      s2 = b * s;
      ds1 = -a * w * s;
      ds2 = b * w * c;
      return;
    case TrajectoryFamily::WarpedEllipse: {
      const double r = 1.0 + kWarp * std::sin(2.0 * th);
      const double dr = 2.0 * kWarp * std::cos(2.0 * th);
      s1 = a * r * c;
      s2 = b * r * s;
      ds1 = a * w * (dr * c - r * s);
      ds2 = b * w * (dr * s + r * c);
      return;
    }
    case TrajectoryFamily::Lemniscate:
      s1 = a * s;
      s2 = b * std::sin(2.0 * th);
      ds1 = a * w * c;
      ds2 = 2.0 * b * w * std::cos(2.0 * th);
      return;
    case TrajectoryFamily::ExtendedLemniscate:
      s1 = a * s;
      s2 = b * (std::sin(2.0 * th) + kHarmonic * std::sin(4.0 * th));
      ds1 = a * w * c;
      ds2 = b * w * (2.0 * std::cos(2.0 * th) + 4.0 * kHarmonic * std::cos(4.0 * th));
      return;
    case TrajectoryFamily::Parabola:
      s1 = a * s;
      s2 = b * s * s;
      ds1 = a * w * c;
      ds2 = 2.0 * b * w * s * c;
      return;
    case TrajectoryFamily::TransposedParabola:
      s1 = b * s * s;
      s2 = a * s;
      ds1 = 2.0 * b * w * s * c;
      ds2 = a * w * c;
      return;
  }
  throw invalid_argument_error("unknown trajectory family");
}

}  // namespace

Reference make_reference(const TrajectorySpec& spec, double t, const NominalParams& params) {
  if (!(spec.duration > 0.0)) {
    throw invalid_argument_error("trajectory duration must be positive");
  }
  if (!spec.amplitudes.allFinite()) {
    throw invalid_argument_error("trajectory amplitudes must be finite");
  }
  if (t < 0.0 || t > spec.duration) {
    throw invalid_argument_error("reference time " + std::to_string(t) +
                                 " outside [0, duration]");
  }

  double s1 = 0, s2 = 0, ds1 = 0, ds2 = 0;
  plane_curve(spec, spec.omega * t + spec.phase, s1, s2, ds1, ds2);
  const double off = spec.amplitudes(2);

  Reference r;
  switch (spec.plane) {
    case Plane::XY:
      r.state.p = Vec3(s1, s2, off);
      r.state.v = Vec3(ds1, ds2, 0.0);
      break;
    case Plane::XZ:
      r.state.p = Vec3(s1, off, s2);
      r.state.v = Vec3(ds1, 0.0, ds2);
      break;
    case Plane::YZ:
      r.state.p = Vec3(off, s1, s2);
      r.state.v = Vec3(0.0, ds1, ds2);
      break;
  }
  r.feedforward = hover_input(params);
  return r;
}

std::string family_to_string(TrajectoryFamily f) {
  switch (f) {
    case TrajectoryFamily::Line: return "line";
    case TrajectoryFamily::Ellipse: return "ellipse";
    case TrajectoryFamily::WarpedEllipse: return "warped_ellipse";
    case TrajectoryFamily::Lemniscate: return "lemniscate";
    case TrajectoryFamily::ExtendedLemniscate: return "extended_lemniscate";
    case TrajectoryFamily::Parabola: return "parabola";
    case TrajectoryFamily::TransposedParabola: return "transposed_parabola";
  }
  throw invalid_argument_error("unknown trajectory family");
}

TrajectoryFamily family_from_string(const std::string& s) {
  if (s == "line") return TrajectoryFamily::Line;
  if (s == "ellipse") return TrajectoryFamily::Ellipse;
  if (s == "warped_ellipse") return TrajectoryFamily::WarpedEllipse;
  if (s == "lemniscate") return TrajectoryFamily::Lemniscate;
  if (s == "extended_lemniscate") return TrajectoryFamily::ExtendedLemniscate;
  if (s == "parabola") return TrajectoryFamily::Parabola;
  if (s == "transposed_parabola") return TrajectoryFamily::TransposedParabola;
  throw invalid_argument_error("unknown trajectory family '" + s + "'");
}

std::string plane_to_string(Plane p) {
  switch (p) {
    case Plane::XY: return "xy";
    case Plane::XZ: return "xz";
    case Plane::YZ: return "yz";
  }
  throw invalid_argument_error("unknown plane");
}

Plane plane_from_string(const std::string& s) {
  if (s == "xy") return Plane::XY;
  if (s == "xz") return Plane::XZ;
  if (s == "yz") return Plane::YZ;
  throw invalid_argument_error("unknown plane '" + s + "', expected xy|xz|yz");
}

TrajectorySpec trajectory_from_config(const Config& c, const std::string& prefix) {
  TrajectorySpec s;
  s.family = family_from_string(c.get_string(prefix + "family", "line"));
  s.amplitudes = c.get_vec3(prefix + "amplitudes", s.amplitudes);
  s.omega = c.get_double(prefix + "omega", s.omega);
  s.plane = plane_from_string(c.get_string(prefix + "plane", "xy"));
  s.duration = c.get_double(prefix + "duration", s.duration);
  s.phase = c.get_double(prefix + "phase", s.phase);
  return s;
}

}  // namespace quadlearn
