#pragma once

#include <cmath>

#include "errors.hpp"
#include "timebase.hpp"

namespace gridsync {

enum class FilterOrder { first = 1, second = 2 };

// Discrete IIR low-pass with unit DC gain. First order is the backward-Euler
// RC recurrence y += alpha * (x - y); second order is a Butterworth biquad
// (bilinear transform, Q = 1/sqrt(2)). Both reduce to one direct-form-1
// difference equation so the step path is shared.
class LowPassFilter {
 public:
  LowPassFilter(FilterOrder order, double cutoff_hz, double dt)
      : order_(order), cutoff_hz_(cutoff_hz), dt_(dt) {
    if (!std::isfinite(dt) || dt <= 0.0) {
      throw config_error("LowPassFilter: dt must be finite and positive");
    }
    if (!std::isfinite(cutoff_hz) || cutoff_hz <= 0.0) {
      throw config_error("LowPassFilter: cutoff_hz must be finite and positive");
    }
    if (cutoff_hz >= 0.5 / dt) {
      throw config_error("LowPassFilter: cutoff_hz must stay below the Nyquist rate");
    }
    if (order == FilterOrder::first) {
      double rc = 1.0 / (two_pi * cutoff_hz);
      double alpha = dt / (rc + dt);
      b0_ = alpha;
      b1_ = 0.0;
      b2_ = 0.0;
      a1_ = -(1.0 - alpha);
      a2_ = 0.0;
    } else {
      double w = std::tan(pi * cutoff_hz * dt);
      double q = 1.0 / std::sqrt(2.0);
      double norm = 1.0 + w / q + w * w;
      b0_ = w * w / norm;
      b1_ = 2.0 * b0_;
      b2_ = b0_;
      a1_ = 2.0 * (w * w - 1.0) / norm;
      a2_ = (1.0 - w / q + w * w) / norm;
    }
    if (std::abs(dc_gain() - 1.0) > 1e-9) {
      throw config_error("LowPassFilter: coefficients violate unit DC gain");
    }
  }

  double step(double x) {
    if (!std::isfinite(x)) {
      throw numeric_error("LowPassFilter: input sample is not finite");
    }
    double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

  void reset() { x1_ = x2_ = y1_ = y2_ = 0.0; }

  double dc_gain() const { return (b0_ + b1_ + b2_) / (1.0 + a1_ + a2_); }
  FilterOrder order() const { return order_; }
  double cutoff_hz() const { return cutoff_hz_; }
  double dt() const { return dt_; }
  double output() const { return y1_; }

 private:
  FilterOrder order_;
  double cutoff_hz_;
  double dt_;
  double b0_, b1_, b2_, a1_, a2_;
  double x1_{0.0}, x2_{0.0}, y1_{0.0}, y2_{0.0};
};

}  // namespace gridsync
