#pragma once

#include <vector>

#include "quadlearn/types.hpp"

namespace quadlearn {

inline constexpr double kMotorScale = 1e-3;

inline Control scale_motor_speeds(const Control& u) { return kMotorScale * u; }

// Even-order Butterworth low-pass as a cascade of biquad sections (bilinear
// transform with frequency prewarping).  zero_phase runs the cascade forward
// and backward over a reflect-padded copy, cancelling the phase lag.
// Throws invalid-argument if cutoff >= Nyquist or order is odd/non-positive.
std::vector<double> butterworth_lowpass(const std::vector<double>& series,
                                        double cutoff_hz, double sample_hz,
                                        int order = 4, bool zero_phase = true);

// Second-order finite differences: central in the interior, one-sided
// three-point stencils at both ends.  Throws invalid-argument for fewer than
// 3 samples or dt <= 0.
std::vector<double> finite_diff(const std::vector<double>& series, double dt);

struct AccelSeries {
  std::vector<Vec3> dv;
  std::vector<Vec3> domega;
};

// Differentiates velocity and body-rate series channel by channel.
AccelSeries finite_diff_accel(const std::vector<Vec3>& v_series,
                              const std::vector<Vec3>& omega_series, double dt);

}  // namespace quadlearn
