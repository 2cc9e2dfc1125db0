#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "errors.hpp"
#include "timebase.hpp"

namespace gridsync {

// Validation thresholds around zero. A candidate crossing only becomes a
// reference point after the waveform proves it keeps moving: above the
// positive level, then below the negative one.
struct HysteresisBand {
  double positive_level{0.1};
  double negative_level{-0.1};
};

inline void validate(const HysteresisBand& band) {
  if (!std::isfinite(band.positive_level) || !std::isfinite(band.negative_level) ||
      band.positive_level <= 0.0 || band.negative_level >= 0.0) {
    throw config_error("HysteresisBand: needs negative_level < 0 < positive_level");
  }
}

struct FrequencyEstimate {
  double hz{0.0};
  double at_time_s{0.0};  // interpolated time of the crossing that completed the period
};

// Sub-sample time of a rising zero crossing between two adjacent samples,
// assuming the waveform is linear across the step.
inline double interpolate_crossing(double prev, double cur, std::int64_t prev_index,
                                   const TimeBase& tb) {
  if (!std::isfinite(prev) || !std::isfinite(cur)) {
    throw numeric_error("interpolate_crossing: samples are not finite");
  }
  if (!(prev < 0.0) || !(cur >= 0.0)) {
    throw config_error("interpolate_crossing: needs prev < 0 and cur >= 0");
  }
  double frac = prev / (prev - cur);
  return (static_cast<double>(prev_index) + frac) * tb.dt;
}

inline double frequency_from_crossings(double t_prev, double t_cur) {
  if (!std::isfinite(t_prev) || !std::isfinite(t_cur) || !(t_cur > t_prev)) {
    throw config_error("frequency_from_crossings: crossing times must be increasing");
  }
  return 1.0 / (t_cur - t_prev);
}

// Rising-edge zero-crossing frequency estimator with hysteresis validation.
//
// The detector mirrors a comparator with thresholds at the band edges. While
// armed, a sample pair straddling zero records a candidate crossing; later
// pairs replace it, so dither inside the band cannot pin the measurement to a
// noise wiggle. The candidate is accepted only once the excursion clears
// positive_level: one period is measured against the previous accepted
// crossing and the estimate is emitted right there. The signal must then fall
// below negative_level before the next candidate can form. Noise bounded
// inside the band can touch zero but never swing across both levels, so it
// cannot create or destroy accepted crossings.
class ZeroCrossingDetector {
 public:
  enum class Stage { armed, await_positive, await_negative };

  ZeroCrossingDetector(HysteresisBand band, TimeBase tb, double smoothing = 0.0)
      : band_(band), tb_(tb), smoothing_(smoothing) {
    validate(band_);
    if (!std::isfinite(smoothing) || smoothing < 0.0 || smoothing >= 1.0) {
      throw config_error("ZeroCrossingDetector: smoothing must lie in [0, 1)");
    }
  }

  std::optional<FrequencyEstimate> step(double sample) {
    if (!std::isfinite(sample)) {
      throw numeric_error("ZeroCrossingDetector: input sample is not finite");
    }
    std::optional<FrequencyEstimate> emitted;
    if ((stage_ == Stage::armed || stage_ == Stage::await_positive) && have_prev_ &&
        prev_ < 0.0 && sample >= 0.0) {
      candidate_time_ = interpolate_crossing(prev_, sample, index_ - 1, tb_);
      stage_ = Stage::await_positive;
    }
    // the sample that pins the candidate may itself clear the positive level
    if (stage_ == Stage::await_positive && sample > band_.positive_level) {
      if (has_crossing_) {
        double f = frequency_from_crossings(last_crossing_time_, candidate_time_);
        if (f < tb_.nyquist_hz()) {
          if (has_estimate_ && smoothing_ > 0.0) {
            estimate_ = smoothing_ * estimate_ + (1.0 - smoothing_) * f;
          } else {
            estimate_ = f;
          }
          has_estimate_ = true;
          emitted = FrequencyEstimate{estimate_, candidate_time_};
        }
      }
      last_crossing_time_ = candidate_time_;
      has_crossing_ = true;
      stage_ = Stage::await_negative;
    }
    if (stage_ == Stage::await_negative && sample < band_.negative_level) {
      stage_ = Stage::armed;
    }
    prev_ = sample;
    have_prev_ = true;
    ++index_;
    return emitted;
  }

  Stage stage() const { return stage_; }
  std::optional<double> estimate_hz() const {
    return has_estimate_ ? std::optional<double>(estimate_) : std::nullopt;
  }
  std::optional<double> last_crossing_time_s() const {
    return has_crossing_ ? std::optional<double>(last_crossing_time_) : std::nullopt;
  }
  std::int64_t sample_index() const { return index_; }
  const HysteresisBand& band() const { return band_; }

 private:
  HysteresisBand band_;
  TimeBase tb_;
  double smoothing_;
  // an unknown start counts as high: the first candidate may only form after
  // the signal has proven a low state by clearing the negative level
  Stage stage_{Stage::await_negative};
  double prev_{0.0};
  bool have_prev_{false};
  std::int64_t index_{0};
  double candidate_time_{0.0};
  double last_crossing_time_{0.0};
  bool has_crossing_{false};
  double estimate_{0.0};
  bool has_estimate_{false};
};

}  // namespace gridsync
