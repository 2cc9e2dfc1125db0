#pragma once

#include <cmath>
#include <cstdint>

#include "errors.hpp"

namespace gridsync {

inline constexpr double two_pi = 6.283185307179586476925286766559;
inline constexpr double pi = 3.1415926535897932384626433832795;

// Wrap an angle into [0, 2*pi).
inline double wrap_phase(double x) {
  double w = std::fmod(x, two_pi);
  if (w < 0.0) w += two_pi;
  // fmod of a value just below a multiple of 2*pi can round to 2*pi itself.
  if (w >= two_pi) w = 0.0;
  return w;
}

// Fixed-step discrete time base. Every block in a simulation shares one of
// these; sample_index * dt is the only notion of time.
struct TimeBase {
  double sample_rate_hz{20000.0};
  double dt{1.0 / 20000.0};

  TimeBase() = default;

  explicit TimeBase(double fs) : sample_rate_hz(fs), dt(1.0 / fs) {
    if (!std::isfinite(fs) || fs <= 0.0) {
      throw config_error("TimeBase: sample_rate_hz must be finite and positive");
    }
  }

  double nyquist_hz() const { return 0.5 * sample_rate_hz; }

  double time_at(std::int64_t sample_index) const {
    return static_cast<double>(sample_index) * dt;
  }
};

}  // namespace gridsync
