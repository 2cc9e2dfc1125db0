#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "timebase.hpp"

namespace gridsync {

enum class SwitchingScheme { bipolar, unipolar };

struct SpwmConfig {
  double carrier_hz{5000.0};
  double modulation_index{0.8};
  double dc_bus_volts{1.0};
  SwitchingScheme scheme{SwitchingScheme::bipolar};
};

inline void validate(const SpwmConfig& cfg, double fundamental_hz, const TimeBase& tb) {
  if (!std::isfinite(cfg.carrier_hz) || cfg.carrier_hz <= 0.0) {
    throw config_error("SpwmConfig: carrier_hz must be finite and positive");
  }
  if (!std::isfinite(fundamental_hz) || fundamental_hz <= 0.0) {
    throw config_error("SpwmConfig: fundamental_hz must be finite and positive");
  }
  if (cfg.carrier_hz < 20.0 * fundamental_hz) {
    throw config_error("SpwmConfig: carrier_hz must be at least 20x the fundamental");
  }
  if (cfg.carrier_hz > 0.25 * tb.sample_rate_hz) {
    throw config_error("SpwmConfig: carrier_hz must not exceed a quarter of the sample rate");
  }
  if (!std::isfinite(cfg.modulation_index) || cfg.modulation_index <= 0.0 ||
      cfg.modulation_index > 1.0) {
    throw config_error("SpwmConfig: modulation_index must lie in (0, 1]");
  }
  if (!std::isfinite(cfg.dc_bus_volts) || cfg.dc_bus_volts <= 0.0) {
    throw config_error("SpwmConfig: dc_bus_volts must be finite and positive");
  }
}

// Symmetric triangular carrier with peaks at +/-1 and a trough at t = 0.
inline double triangle_carrier(double t, double carrier_hz) {
  double cycles = t * carrier_hz;
  double frac = cycles - std::floor(cycles);
  return frac < 0.5 ? 4.0 * frac - 1.0 : 3.0 - 4.0 * frac;
}

namespace detail {

inline double switch_level(const SpwmConfig& cfg, double cmd, double tri) {
  if (cfg.scheme == SwitchingScheme::bipolar) {
    return cmd >= tri ? cfg.dc_bus_volts : -cfg.dc_bus_volts;
  }
  double leg_a = cmd >= tri ? 1.0 : 0.0;
  double leg_b = -cmd >= tri ? 1.0 : 0.0;
  return (leg_a - leg_b) * cfg.dc_bus_volts;
}

}  // namespace detail

// Natural-sampled comparator. The command is the reference scaled by the
// modulation index; a command outside the carrier range means the requested
// output exceeds what the bus can synthesize, which is an error here rather
// than silent clipping.
inline double spwm_step(const SpwmConfig& cfg, double reference_sample, double t) {
  if (!std::isfinite(reference_sample) || !std::isfinite(t)) {
    throw numeric_error("spwm_step: inputs are not finite");
  }
  double cmd = cfg.modulation_index * reference_sample;
  if (std::abs(cmd) > 1.0 + 1e-12) {
    throw config_error("spwm_step: over-modulation, |modulation_index * reference| exceeds 1");
  }
  return detail::switch_level(cfg, cmd, triangle_carrier(t, cfg.carrier_hz));
}

// Mean switching level over the sample cell [t0, t0 + dt), with the command
// interpolated linearly between its endpoint samples. The cell is cut at
// carrier vertices and comparator roots, so every piece holds one constant
// level and the mean carries the continuous-time edge positions that a
// per-sample comparison snaps to the grid. This is what the output filter
// integrates; switching-level channels stay on spwm_step.
inline double spwm_cell_average(const SpwmConfig& cfg, double ref_begin, double ref_end,
                                double t0, double dt) {
  if (!std::isfinite(ref_begin) || !std::isfinite(ref_end) || !std::isfinite(t0)) {
    throw numeric_error("spwm_cell_average: inputs are not finite");
  }
  if (!std::isfinite(dt) || dt <= 0.0) {
    throw config_error("spwm_cell_average: dt must be finite and positive");
  }
  const double c0 = cfg.modulation_index * ref_begin;
  const double c1 = cfg.modulation_index * ref_end;
  if (std::abs(c0) > 1.0 + 1e-12 || std::abs(c1) > 1.0 + 1e-12) {
    throw config_error(
        "spwm_cell_average: over-modulation, |modulation_index * reference| exceeds 1");
  }

  auto command = [&](double s) { return c0 + (c1 - c0) * s; };
  auto tri_at = [&](double s) { return triangle_carrier(t0 + s * dt, cfg.carrier_hz); };

  // Cell fractions of every carrier vertex inside the cell; between cuts both
  // the carrier and the command are linear.
  std::vector<double> cuts;
  cuts.reserve(8);
  cuts.push_back(0.0);
  const double half_period = 0.5 / cfg.carrier_hz;
  for (double i = std::ceil(t0 / half_period);; i += 1.0) {
    double s = (i * half_period - t0) / dt;
    if (s >= 1.0 - 1e-9) break;
    if (s > 1e-9) cuts.push_back(s);
  }
  cuts.push_back(1.0);

  std::vector<double> roots;
  auto add_roots = [&](double sign) {
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      double a = cuts[i];
      double b = cuts[i + 1];
      double da = sign * command(a) - tri_at(a);
      double db = sign * command(b) - tri_at(b);
      if ((da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0)) {
        roots.push_back(a + (b - a) * (da / (da - db)));
      }
    }
  };
  add_roots(1.0);
  if (cfg.scheme == SwitchingScheme::unipolar) add_roots(-1.0);
  cuts.insert(cuts.end(), roots.begin(), roots.end());
  std::sort(cuts.begin(), cuts.end());

  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double width = cuts[i + 1] - cuts[i];
    if (width <= 0.0) continue;
    double sm = 0.5 * (cuts[i] + cuts[i + 1]);
    acc += detail::switch_level(cfg, command(sm), tri_at(sm)) * width;
  }
  return acc;
}

// The unmodulated baseline for harmonic comparisons: a square wave keyed
// directly off the reference sign. sign(0) counts as positive.
inline double square_step(double reference_sample, double dc_bus_volts = 1.0) {
  if (!std::isfinite(reference_sample)) {
    throw numeric_error("square_step: reference sample is not finite");
  }
  if (!std::isfinite(dc_bus_volts) || dc_bus_volts <= 0.0) {
    throw config_error("square_step: dc_bus_volts must be finite and positive");
  }
  return reference_sample >= 0.0 ? dc_bus_volts : -dc_bus_volts;
}

// Mean of the sign-keyed square stage over one cell, with the reference
// interpolated linearly between its endpoint samples. sign(0) counts as
// positive, matching square_step.
inline double square_cell_average(double ref_begin, double ref_end,
                                  double dc_bus_volts = 1.0) {
  if (!std::isfinite(ref_begin) || !std::isfinite(ref_end)) {
    throw numeric_error("square_cell_average: reference samples are not finite");
  }
  if (!std::isfinite(dc_bus_volts) || dc_bus_volts <= 0.0) {
    throw config_error("square_cell_average: dc_bus_volts must be finite and positive");
  }
  bool begin_pos = ref_begin >= 0.0;
  bool end_pos = ref_end >= 0.0;
  if (begin_pos == end_pos) return begin_pos ? dc_bus_volts : -dc_bus_volts;
  double root = ref_begin / (ref_begin - ref_end);
  double positive_fraction = begin_pos ? root : 1.0 - root;
  return dc_bus_volts * (2.0 * positive_fraction - 1.0);
}

struct SpectrumResult {
  double fundamental_hz{0.0};
  std::vector<double> magnitudes;  // magnitudes[k-1] is the amplitude at k * fundamental
  double thd{0.0};

  double magnitude(int order) const {
    if (order < 1 || static_cast<std::size_t>(order) > magnitudes.size()) {
      throw config_error("SpectrumResult: harmonic order " + std::to_string(order) +
                         " is outside the analyzed range");
    }
    return magnitudes[static_cast<std::size_t>(order) - 1];
  }

  // Harmonic amplitude relative to the fundamental.
  double relative(int order) const { return magnitude(order) / magnitude(1); }
};

// Single-bin projections at each harmonic of fundamental_hz over the largest
// whole number of fundamental periods the sequence covers. Whole-period
// windows keep the bins orthogonal, so no window function is needed.
inline SpectrumResult spectrum(std::span<const double> samples, const TimeBase& tb,
                               double fundamental_hz, int max_order) {
  if (!std::isfinite(fundamental_hz) || fundamental_hz <= 0.0) {
    throw config_error("spectrum: fundamental_hz must be finite and positive");
  }
  if (max_order < 1) {
    throw config_error("spectrum: max_order must be at least 1");
  }
  if (max_order * fundamental_hz >= tb.nyquist_hz()) {
    throw config_error("spectrum: max_order * fundamental_hz must stay below Nyquist");
  }
  double span_s = static_cast<double>(samples.size()) * tb.dt;
  double periods = std::floor(span_s * fundamental_hz + 1e-9);
  if (periods < 1.0) {
    throw config_error("spectrum: sequence covers less than one fundamental period");
  }
  auto count = static_cast<std::size_t>(std::llround(periods / (fundamental_hz * tb.dt)));
  count = std::min(count, samples.size());

  SpectrumResult result;
  result.fundamental_hz = fundamental_hz;
  result.magnitudes.resize(static_cast<std::size_t>(max_order));
  for (int order = 1; order <= max_order; ++order) {
    std::complex<double> acc{0.0, 0.0};
    std::complex<double> rot{1.0, 0.0};
    const std::complex<double> turn =
        std::polar(1.0, -two_pi * order * fundamental_hz * tb.dt);
    for (std::size_t j = 0; j < count; ++j) {
      if (!std::isfinite(samples[j])) {
        throw numeric_error("spectrum: sample is not finite");
      }
      acc += samples[j] * rot;
      rot *= turn;
    }
    result.magnitudes[static_cast<std::size_t>(order) - 1] =
        2.0 * std::abs(acc) / static_cast<double>(count);
  }
  double harmonics_sq = 0.0;
  for (std::size_t i = 1; i < result.magnitudes.size(); ++i) {
    harmonics_sq += result.magnitudes[i] * result.magnitudes[i];
  }
  double m1 = result.magnitudes[0];
  result.thd = m1 > 0.0 ? std::sqrt(harmonics_sq) / m1 : 0.0;
  return result;
}

}  // namespace gridsync
