#include "quadlearn/signal.hpp"

#include <algorithm>
#include <cmath>

namespace quadlearn {

namespace {

struct Biquad {
  double gain, d1, d2;
};

std::vector<Biquad> design_sections(double cutoff_hz, double sample_hz, int order) {
  if (order <= 0 || order % 2 != 0) {
    throw invalid_argument_error("Butterworth order must be a positive even number");
  }
  if (!(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * sample_hz) {
    throw invalid_argument_error("cutoff must lie in (0, Nyquist)");
  }
  const int n = order / 2;
  const double a = std::tan(M_PI * cutoff_hz / sample_hz);
  const double a2 = a * a;
  std::vector<Biquad> sections(n);
  for (int i = 0; i < n; ++i) {
    const double r = std::sin(M_PI * (2.0 * i + 1.0) / (4.0 * n));
    const double s = a2 + 2.0 * a * r + 1.0;
    sections[i] = {a2 / s, 2.0 * (1.0 - a2) / s, -(a2 - 2.0 * a * r + 1.0) / s};
  }
  return sections;
}

// One pass over the series; section states start at the DC steady state of
// the first sample so a constant input passes through unchanged.
void run_cascade(std::vector<double>& x, const std::vector<Biquad>& sections) {
  for (const Biquad& bq : sections) {
    double w1 = x.empty() ? 0.0 : x.front() / (1.0 - bq.d1 - bq.d2);
    double w2 = w1;
    for (double& v : x) {
      const double w0 = bq.d1 * w1 + bq.d2 * w2 + v;
      v = bq.gain * (w0 + 2.0 * w1 + w2);
      w2 = w1;
      w1 = w0;
    }
  }
}

}  // namespace

std::vector<double> butterworth_lowpass(const std::vector<double>& series,
                                        double cutoff_hz, double sample_hz, int order,
                                        bool zero_phase) {
  const auto sections = design_sections(cutoff_hz, sample_hz, order);
  if (series.empty()) return {};

  if (!zero_phase) {
    std::vector<double> x = series;
    run_cascade(x, sections);
    return x;
  }

  const size_t n = series.size();
  const size_t pad =
      std::min(n - 1, static_cast<size_t>(std::lround(2.0 * sample_hz / cutoff_hz)));

  // Odd reflection about both endpoints keeps level and slope continuous.
  std::vector<double> x;
  x.reserve(n + 2 * pad);
  for (size_t i = 0; i < pad; ++i) x.push_back(2.0 * series.front() - series[pad - i]);
  x.insert(x.end(), series.begin(), series.end());
  for (size_t i = 0; i < pad; ++i) x.push_back(2.0 * series.back() - series[n - 2 - i]);

  run_cascade(x, sections);
  std::reverse(x.begin(), x.end());
  run_cascade(x, sections);
  std::reverse(x.begin(), x.end());

  return std::vector<double>(x.begin() + pad, x.begin() + pad + n);
}

std::vector<double> finite_diff(const std::vector<double>& series, double dt) {
  if (series.size() < 3) {
    throw invalid_argument_error("finite_diff needs at least 3 samples");
  }
  if (!(dt > 0.0)) {
    throw invalid_argument_error("finite_diff requires dt > 0");
  }
  const size_t n = series.size();
  std::vector<double> out(n);
  out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt);
  for (size_t i = 1; i + 1 < n; ++i) {
    out[i] = (series[i + 1] - series[i - 1]) / (2.0 * dt);
  }
  out[n - 1] = (3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) / (2.0 * dt);
  return out;
}

AccelSeries finite_diff_accel(const std::vector<Vec3>& v_series,
                              const std::vector<Vec3>& omega_series, double dt) {
  if (v_series.size() != omega_series.size()) {
    throw shape_error("velocity and rate series lengths differ: " +
                      std::to_string(v_series.size()) + " vs " +
                      std::to_string(omega_series.size()));
  }
  const size_t n = v_series.size();
  AccelSeries out;
  out.dv.resize(n);
  out.domega.resize(n);
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> v(n), w(n);
    for (size_t i = 0; i < n; ++i) {
      v[i] = v_series[i](axis);
      w[i] = omega_series[i](axis);
    }
    const auto dv = finite_diff(v, dt);
    const auto dw = finite_diff(w, dt);
    for (size_t i = 0; i < n; ++i) {
      out.dv[i](axis) = dv[i];
      out.domega[i](axis) = dw[i];
    }
  }
  return out;
}

}  // namespace quadlearn
