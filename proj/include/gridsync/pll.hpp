#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>

#include "errors.hpp"
#include "lowpass.hpp"
#include "nco.hpp"
#include "pid.hpp"
#include "timebase.hpp"

namespace gridsync {

// product: multiply reference by the generated wave itself. For unit sinusoids
// theta apart the product is cos(theta)/2 - cos(2wt + theta)/2; the loop filter
// keeps the DC term, so the lock target is 0.5 at theta = 0.
// quadrature: the detector sees a 90-degree-delayed replica instead, moving the
// DC term to sin(theta)/2 and the lock target to zero.
enum class DetectorMode { product, quadrature };

inline double phase_detector(double v_ref, double v_out) {
  if (!std::isfinite(v_ref) || !std::isfinite(v_out)) {
    throw numeric_error("phase_detector: inputs are not finite");
  }
  return v_ref * v_out;
}

struct PllConfig {
  DetectorMode detector_mode{DetectorMode::product};
  FilterOrder loop_filter_order{FilterOrder::second};
  double loop_filter_cutoff_hz{4.0};
  double kp{20.0};
  double ki{0.0};
  double kd{0.1};
  double pid_out_min_hz{-1.0};
  double pid_out_max_hz{1.0};
  bool anti_windup{true};
  double phase_shift_rad{0.0};
  double lock_band{0.002};
  double lock_dwell_s{0.1};
  double f_min_hz{20.0};
  double f_max_hz{80.0};
  double max_clamp_s{1.0};
  double initial_nco_phase_rad{0.0};
};

inline double setpoint_for(DetectorMode mode) {
  return mode == DetectorMode::product ? 0.5 : 0.0;
}

inline void validate(const PllConfig& cfg, const TimeBase& tb) {
  if (!std::isfinite(cfg.kp) || !std::isfinite(cfg.ki) || !std::isfinite(cfg.kd)) {
    throw config_error("PllConfig: gains must be finite");
  }
  if (!std::isfinite(cfg.loop_filter_cutoff_hz) || cfg.loop_filter_cutoff_hz <= 0.0 ||
      cfg.loop_filter_cutoff_hz >= tb.nyquist_hz()) {
    throw config_error("PllConfig: loop_filter_cutoff_hz must be positive and below Nyquist");
  }
  if (!(cfg.pid_out_min_hz < cfg.pid_out_max_hz)) {
    throw config_error("PllConfig: pid_out_min_hz must be below pid_out_max_hz");
  }
  if (!std::isfinite(cfg.phase_shift_rad)) {
    throw config_error("PllConfig: phase_shift_rad must be finite");
  }
  if (!std::isfinite(cfg.lock_band) || cfg.lock_band <= 0.0) {
    throw config_error("PllConfig: lock_band must be positive");
  }
  if (!std::isfinite(cfg.lock_dwell_s) || cfg.lock_dwell_s <= 0.0) {
    throw config_error("PllConfig: lock_dwell_s must be positive");
  }
  if (!std::isfinite(cfg.f_min_hz) || !std::isfinite(cfg.f_max_hz) || cfg.f_min_hz <= 0.0 ||
      !(cfg.f_min_hz < cfg.f_max_hz) || cfg.f_max_hz >= tb.nyquist_hz()) {
    throw config_error("PllConfig: frequency clamp must satisfy 0 < f_min < f_max < Nyquist");
  }
  if (!std::isfinite(cfg.max_clamp_s) || cfg.max_clamp_s <= 0.0) {
    throw config_error("PllConfig: max_clamp_s must be positive");
  }
  if (!std::isfinite(cfg.initial_nco_phase_rad)) {
    throw config_error("PllConfig: initial_nco_phase_rad must be finite");
  }
}

// Software phase-locked loop around the product detector. The zero-crossing
// estimate carries the frequency; the loop only trims phase, so the PID output
// is a small frequency correction added on top of the estimate and clamped to
// [f_min, f_max]. Holding the command at the clamp for longer than max_clamp_s
// is treated as divergence.
class Pll {
 public:
  Pll(const PllConfig& cfg, TimeBase tb)
      : cfg_(cfg),
        tb_(tb),
        lpf_(cfg.loop_filter_order, cfg.loop_filter_cutoff_hz, tb.dt),
        pid_(cfg.kp, cfg.ki, cfg.kd, tb.dt, setpoint_for(cfg.detector_mode),
             cfg.pid_out_min_hz, cfg.pid_out_max_hz, cfg.anti_windup),
        nco_(cfg.initial_nco_phase_rad) {
    validate(cfg, tb);
  }

  // Feed-forward path from the zero-crossing estimator.
  void set_reference_frequency(double hz) {
    if (!std::isfinite(hz) || hz <= 0.0 || hz >= tb_.nyquist_hz()) {
      throw config_error("Pll: reference frequency must be positive and below Nyquist");
    }
    zcd_hz_ = hz;
  }

  bool has_reference_frequency() const { return zcd_hz_.has_value(); }

  // One loop iteration against the current reference sample. Returns the
  // generated output sample, already carrying the configured phase shift.
  double step(double v_ref) {
    double v_out = std::sin(nco_.phase() + cfg_.phase_shift_rad);
    double det_in = v_out;
    if (cfg_.detector_mode == DetectorMode::quadrature) {
      det_in = std::sin(nco_.phase() + cfg_.phase_shift_rad - 0.5 * pi);
    }
    advance(v_ref, det_in);
    return v_out;
  }

  // Same loop, but the detector sees an externally measured feedback sample
  // (e.g. the filtered inverter voltage). The returned sample is the raw
  // oscillator output feeding the modulator.
  double step(double v_ref, double feedback_sample) {
    if (cfg_.detector_mode != DetectorMode::product) {
      throw config_error("Pll: external feedback requires the product detector");
    }
    double v_out = std::sin(nco_.phase());
    advance(v_ref, feedback_sample);
    return v_out;
  }

  double setpoint() const { return pid_.setpoint(); }
  double process_variable() const { return pv_; }
  double control_output_hz() const { return u_; }
  double frequency_command_hz() const { return f_cmd_; }
  double reference_frequency_hz() const { return zcd_hz_.value_or(0.0); }
  double nco_phase() const { return nco_.phase(); }
  double time_in_band_s() const { return time_in_band_s_; }
  bool locked() const { return locked_; }
  const PllConfig& config() const { return cfg_; }

 private:
  void advance(double v_ref, double det_in) {
    if (!zcd_hz_) {
      throw not_ready_error("Pll: stepped before any reference frequency estimate");
    }
    if (!std::isfinite(v_ref)) {
      throw numeric_error("Pll: reference sample is not finite");
    }
    double d = phase_detector(v_ref, det_in);
    pv_ = lpf_.step(d);
    u_ = pid_.step(pv_);
    double f_raw = *zcd_hz_ + u_;
    f_cmd_ = std::clamp(f_raw, cfg_.f_min_hz, cfg_.f_max_hz);
    if (f_cmd_ != f_raw) {
      clamp_time_s_ += tb_.dt;
      if (clamp_time_s_ > cfg_.max_clamp_s) {
        throw divergence_error(
            "Pll: frequency command pinned at the clamp beyond max_clamp_s; loop diverged");
      }
    } else {
      clamp_time_s_ = 0.0;
    }
    nco_.step(f_cmd_, tb_.dt);
    if (std::abs(pv_ - setpoint()) <= cfg_.lock_band) {
      time_in_band_s_ += tb_.dt;
    } else {
      time_in_band_s_ = 0.0;
    }
    locked_ = time_in_band_s_ + 1e-12 >= cfg_.lock_dwell_s;
  }

  PllConfig cfg_;
  TimeBase tb_;
  LowPassFilter lpf_;
  PidController pid_;
  Nco nco_;
  std::optional<double> zcd_hz_{};
  double pv_{0.0};
  double u_{0.0};
  double f_cmd_{0.0};
  double clamp_time_s_{0.0};
  double time_in_band_s_{0.0};
  bool locked_{false};
};

// Phase of `out` relative to `ref` in degrees, positive when out leads. Both
// traces are projected onto a single complex bin at f_hz over a whole number
// of periods, so the measurement ignores uncorrelated noise and harmonics.
inline double measure_phase_error(std::span<const double> ref, std::span<const double> out,
                                  double f_hz, const TimeBase& tb) {
  if (ref.size() != out.size()) {
    throw config_error("measure_phase_error: traces must have equal length");
  }
  if (!std::isfinite(f_hz) || f_hz <= 0.0 || f_hz >= tb.nyquist_hz()) {
    throw config_error("measure_phase_error: f_hz must be positive and below Nyquist");
  }
  double span_s = static_cast<double>(ref.size()) * tb.dt;
  double periods = std::floor(span_s * f_hz + 1e-9);
  if (periods < 2.0) {
    throw config_error("measure_phase_error: window must cover at least two periods of f_hz");
  }
  auto count = static_cast<std::size_t>(std::llround(periods / (f_hz * tb.dt)));
  count = std::min(count, ref.size());
  std::complex<double> zr{0.0, 0.0};
  std::complex<double> zo{0.0, 0.0};
  std::complex<double> rot{1.0, 0.0};
  const std::complex<double> turn = std::polar(1.0, -two_pi * f_hz * tb.dt);
  for (std::size_t j = 0; j < count; ++j) {
    if (!std::isfinite(ref[j]) || !std::isfinite(out[j])) {
      throw numeric_error("measure_phase_error: trace sample is not finite");
    }
    zr += ref[j] * rot;
    zo += out[j] * rot;
    rot *= turn;
  }
  double floor_mag = 1e-12 * static_cast<double>(count);
  if (std::abs(zr) < floor_mag || std::abs(zo) < floor_mag) {
    throw config_error("measure_phase_error: a trace has no component at f_hz");
  }
  double deg = (std::arg(zo) - std::arg(zr)) * 180.0 / pi;
  double d = std::fmod(deg + 180.0, 360.0);
  if (d <= 0.0) d += 360.0;
  return d - 180.0;
}

inline bool is_locked(const Pll& pll) { return pll.locked(); }

}  // namespace gridsync
