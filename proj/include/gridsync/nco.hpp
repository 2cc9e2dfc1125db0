#pragma once

#include <cmath>

#include "errors.hpp"
#include "timebase.hpp"

namespace gridsync {

// Numerically controlled oscillator: a phase accumulator sampled with sin().
// The commanded frequency may change every step. Each step emits the sample at
// the current phase, then advances, so the k-th emitted sample of a constant-
// frequency run matches the k-th sample of the reference generator.
class Nco {
 public:
  explicit Nco(double initial_phase_rad = 0.0) {
    if (!std::isfinite(initial_phase_rad)) {
      throw config_error("Nco: initial phase must be finite");
    }
    phase_ = wrap_phase(initial_phase_rad);
  }

  double step(double frequency_hz, double dt) {
    if (!std::isfinite(dt) || dt <= 0.0) {
      throw config_error("Nco: dt must be finite and positive");
    }
    if (!std::isfinite(frequency_hz) || frequency_hz < 0.0 || frequency_hz >= 0.5 / dt) {
      throw config_error("Nco: frequency_hz must lie in [0, Nyquist)");
    }
    double s = std::sin(phase_);
    phase_ = wrap_phase(phase_ + two_pi * frequency_hz * dt);
    return s;
  }

  double phase() const { return phase_; }

  void set_phase(double phase_rad) {
    if (!std::isfinite(phase_rad)) {
      throw config_error("Nco: phase must be finite");
    }
    phase_ = wrap_phase(phase_rad);
  }

 private:
  double phase_{0.0};
};

}  // namespace gridsync
