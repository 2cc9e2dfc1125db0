#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"

namespace gridsync {

// Discrete PID acting on error = setpoint - process_variable. Rectangular
// integration, backward-difference derivative, output clamped to
// [out_min, out_max]. With anti-windup the tentative integral still shapes the
// output but is committed only on steps whose unclamped output stays inside
// the limits.
class PidController {
 public:
  PidController(double kp, double ki, double kd, double dt, double setpoint,
                double out_min = -std::numeric_limits<double>::infinity(),
                double out_max = std::numeric_limits<double>::infinity(),
                bool anti_windup = true)
      : kp_(kp), ki_(ki), kd_(kd), dt_(dt), setpoint_(setpoint),
        out_min_(out_min), out_max_(out_max), anti_windup_(anti_windup) {
    if (!std::isfinite(dt) || dt <= 0.0) {
      throw config_error("PidController: dt must be finite and positive");
    }
    if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd)) {
      throw config_error("PidController: gains must be finite");
    }
    if (!std::isfinite(setpoint)) {
      throw config_error("PidController: setpoint must be finite");
    }
    if (std::isnan(out_min) || std::isnan(out_max) || !(out_min < out_max)) {
      throw config_error("PidController: out_min must be below out_max");
    }
  }

  double step(double process_variable) {
    if (!std::isfinite(process_variable)) {
      throw numeric_error("PidController: process variable is not finite");
    }
    double e = setpoint_ - process_variable;
    double i_cand = integral_ + e * dt_;
    double d = (e - prev_error_) / dt_;
    double u = kp_ * e + ki_ * i_cand + kd_ * d;
    bool saturated = u > out_max_ || u < out_min_;
    if (!saturated || !anti_windup_) {
      integral_ = i_cand;
    }
    prev_error_ = e;
    return std::clamp(u, out_min_, out_max_);
  }

  void reset() {
    integral_ = 0.0;
    prev_error_ = 0.0;
  }

  double setpoint() const { return setpoint_; }
  double integral() const { return integral_; }
  double previous_error() const { return prev_error_; }
  double out_min() const { return out_min_; }
  double out_max() const { return out_max_; }

 private:
  double kp_, ki_, kd_;
  double dt_;
  double setpoint_;
  double out_min_, out_max_;
  bool anti_windup_;
  double integral_{0.0};
  double prev_error_{0.0};
};

}  // namespace gridsync
