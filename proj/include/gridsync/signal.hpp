#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "timebase.hpp"

namespace gridsync {

struct Harmonic {
  int order{2};                  // multiple of the fundamental, >= 2
  double relative_amplitude{0.0};
  double phase_rad{0.0};
};

struct SignalSpec {
  double amplitude{1.0};
  double frequency_hz{50.0};
  double phase_rad{0.0};
  double dc_offset{0.0};
  std::vector<Harmonic> harmonics{};
  double noise_std{0.0};
  std::uint64_t seed{0};
};

// A scheduled disturbance. Applied at the first sample whose time reaches
// at_time_s; the fundamental phase stays continuous across a frequency change
// unless an explicit phase jump is carried.
struct StepEvent {
  double at_time_s{0.0};
  std::optional<double> new_frequency_hz{};
  std::optional<double> phase_jump_rad{};
};

inline void validate(const SignalSpec& spec, const TimeBase& tb) {
  if (!std::isfinite(spec.amplitude) || spec.amplitude < 0.0) {
    throw config_error("SignalSpec: amplitude must be finite and non-negative");
  }
  if (!std::isfinite(spec.frequency_hz) || spec.frequency_hz <= 0.0) {
    throw config_error("SignalSpec: frequency_hz must be finite and positive");
  }
  if (spec.frequency_hz >= tb.nyquist_hz()) {
    throw config_error("SignalSpec: frequency_hz must stay below the Nyquist rate");
  }
  if (!std::isfinite(spec.phase_rad)) {
    throw config_error("SignalSpec: phase_rad must be finite");
  }
  if (!std::isfinite(spec.dc_offset)) {
    throw config_error("SignalSpec: dc_offset must be finite");
  }
  if (!std::isfinite(spec.noise_std) || spec.noise_std < 0.0) {
    throw config_error("SignalSpec: noise_std must be finite and non-negative");
  }
  for (const auto& h : spec.harmonics) {
    if (h.order < 2) {
      throw config_error("SignalSpec: harmonic order must be at least 2");
    }
    if (!std::isfinite(h.relative_amplitude) || h.relative_amplitude < 0.0) {
      throw config_error("SignalSpec: harmonic relative_amplitude must be finite and non-negative");
    }
    if (!std::isfinite(h.phase_rad)) {
      throw config_error("SignalSpec: harmonic phase_rad must be finite");
    }
    if (h.order * spec.frequency_hz >= tb.nyquist_hz()) {
      throw config_error("SignalSpec: harmonic " + std::to_string(h.order) +
                         " would alias; order * frequency_hz must stay below Nyquist");
    }
    for (const auto& other : spec.harmonics) {
      if (&other != &h && other.order == h.order) {
        throw config_error("SignalSpec: duplicate harmonic order " + std::to_string(h.order));
      }
    }
  }
}

inline void validate(const std::vector<StepEvent>& events, const TimeBase& tb) {
  double prev_time = -1.0;
  for (const auto& ev : events) {
    if (!std::isfinite(ev.at_time_s) || ev.at_time_s < 0.0) {
      throw config_error("StepEvent: at_time_s must be finite and non-negative");
    }
    if (ev.at_time_s < prev_time) {
      throw config_error("StepEvent: events must be sorted by at_time_s");
    }
    prev_time = ev.at_time_s;
    if (!ev.new_frequency_hz && !ev.phase_jump_rad) {
      throw config_error("StepEvent: event carries neither a frequency nor a phase jump");
    }
    if (ev.new_frequency_hz) {
      double f = *ev.new_frequency_hz;
      if (!std::isfinite(f) || f <= 0.0 || f >= tb.nyquist_hz()) {
        throw config_error("StepEvent: new_frequency_hz must be positive and below Nyquist");
      }
    }
    if (ev.phase_jump_rad && !std::isfinite(*ev.phase_jump_rad)) {
      throw config_error("StepEvent: phase_jump_rad must be finite");
    }
  }
}

// Streams the reference waveform one sample at a time. The fundamental phase is
// accumulated, never recomputed from absolute time, so frequency steps keep the
// waveform continuous. Noise is drawn only when noise_std > 0; clean runs never
// touch the RNG.
class SignalGenerator {
 public:
  SignalGenerator(SignalSpec spec, TimeBase tb, std::vector<StepEvent> events = {})
      : spec_(std::move(spec)),
        tb_(tb),
        events_(std::move(events)),
        frequency_hz_(spec_.frequency_hz),
        phase_(wrap_phase(spec_.phase_rad)),
        rng_(spec_.seed) {
    validate(spec_, tb_);
    validate(events_, tb_);
  }

  // Emit the sample at the current index, then advance phase and index.
  double next() {
    apply_due_events();
    double s = spec_.dc_offset + spec_.amplitude * std::sin(phase_);
    for (const auto& h : spec_.harmonics) {
      s += spec_.amplitude * h.relative_amplitude *
           std::sin(wrap_phase(h.order * phase_ + h.phase_rad));
    }
    if (spec_.noise_std > 0.0) {
      s += spec_.noise_std * gauss_(rng_);
    }
    phase_ = wrap_phase(phase_ + two_pi * frequency_hz_ * tb_.dt);
    ++index_;
    return s;
  }

  // Fundamental phase of the sample the next call to next() will emit.
  double phase() const { return phase_; }

  // Frequency currently driving the accumulator.
  double frequency_hz() const { return frequency_hz_; }

  std::int64_t index() const { return index_; }
  const TimeBase& timebase() const { return tb_; }

 private:
  void apply_due_events() {
    double t = tb_.time_at(index_);
    double eps = tb_.dt * 1e-6;
    while (next_event_ < events_.size() && events_[next_event_].at_time_s <= t + eps) {
      const StepEvent& ev = events_[next_event_];
      if (ev.new_frequency_hz) frequency_hz_ = *ev.new_frequency_hz;
      if (ev.phase_jump_rad) phase_ = wrap_phase(phase_ + *ev.phase_jump_rad);
      ++next_event_;
    }
  }

  SignalSpec spec_;
  TimeBase tb_;
  std::vector<StepEvent> events_;
  double frequency_hz_;
  double phase_;
  std::int64_t index_{0};
  std::size_t next_event_{0};
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

inline std::vector<double> generate(const SignalSpec& spec, const TimeBase& tb,
                                    std::size_t sample_count,
                                    const std::vector<StepEvent>& events = {}) {
  if (sample_count == 0) {
    throw config_error("generate: sample_count must be at least 1");
  }
  SignalGenerator gen(spec, tb, events);
  std::vector<double> out(sample_count);
  for (auto& s : out) s = gen.next();
  return out;
}

// Instantaneous fundamental phase of the event-free waveform at a sample index.
inline double phase_of(const SignalSpec& spec, const TimeBase& tb, std::int64_t sample_index) {
  validate(spec, tb);
  if (sample_index < 0) {
    throw config_error("phase_of: sample_index must be non-negative");
  }
  return wrap_phase(spec.phase_rad + two_pi * spec.frequency_hz * tb.time_at(sample_index));
}

}  // namespace gridsync
