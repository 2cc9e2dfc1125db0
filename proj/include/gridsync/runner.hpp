#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"
#include "inverter.hpp"
#include "lowpass.hpp"
#include "pll.hpp"
#include "scenario.hpp"
#include "signal.hpp"
#include "timebase.hpp"
#include "zcd.hpp"

namespace gridsync {

struct EstimateLog {
  double at_time_s{0.0};  // interpolated crossing time
  double hz{0.0};
  double truth_hz{0.0};  // generator frequency when the estimate was emitted
};

struct Metrics {
  std::string scenario_name;
  double sample_rate_hz{0.0};
  double duration_s{0.0};
  std::uint64_t seed{0};
  std::optional<double> zcd_settling_s{};
  std::optional<double> zcd_final_hz{};
  std::optional<double> zcd_final_error_hz{};
  std::optional<double> lock_time_s{};
  bool locked_at_end{false};
  std::optional<double> steady_phase_error_deg{};
  std::optional<double> pv_steady{};
  std::optional<SpectrumResult> spwm_spectrum{};
  std::optional<SpectrumResult> square_spectrum{};
};

struct RunResult {
  Metrics metrics;
  Recording recording;
  std::vector<EstimateLog> estimates;
};

// First time after which the trace stays within tolerance of the target for
// good. Empty optional means the trace never settles (its last sample is
// already outside).
inline std::optional<double> settling_time(std::span<const double> times,
                                           std::span<const double> values, double target,
                                           double tolerance) {
  if (times.size() != values.size()) {
    throw config_error("settling_time: traces must have equal length");
  }
  if (times.empty()) throw config_error("settling_time: empty trace");
  if (!std::isfinite(target) || !std::isfinite(tolerance) || tolerance < 0.0) {
    throw config_error("settling_time: target and tolerance must be finite, tolerance >= 0");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw config_error("settling_time: times must be strictly increasing");
    }
  }
  std::size_t first_good = times.size();  // start of the all-good suffix
  for (std::size_t i = times.size(); i-- > 0;) {
    if (std::abs(values[i] - target) > tolerance) break;
    first_good = i;
  }
  if (first_good == times.size()) return std::nullopt;
  return times[first_good];
}

// Executes the full pipeline: reference generator -> zero-crossing estimator
// -> PLL (optionally -> SPWM inverter -> output filter, optionally closing the
// detector loop through the filtered inverter voltage).
inline RunResult run_scenario(const Scenario& s) {
  validate(s);
  const TimeBase tb = s.timebase;
  const auto n = static_cast<std::int64_t>(std::llround(s.duration_s * tb.sample_rate_hz));
  if (n < 1) throw config_error("run_scenario: duration shorter than one sample");

  SignalSpec reference = s.reference;
  reference.seed = s.seed;  // the scenario seed is the determinism knob
  SignalGenerator gen(reference, tb, s.events);
  ZeroCrossingDetector zcd(s.zcd.band, tb, s.zcd.smoothing);
  Pll pll(s.pll, tb);
  std::optional<LowPassFilter> inv_filter;
  if (s.inverter) {
    inv_filter.emplace(FilterOrder::second, s.inverter->filter_cutoff_hz, tb.dt);
  }

  std::vector<Channel> chans;
  chans.reserve(s.record.size());
  for (const auto& name : s.record) chans.push_back(channel_from_name(name));

  RunResult rr;
  rr.recording.names = s.record;
  rr.recording.time.reserve(static_cast<std::size_t>(n));
  rr.recording.columns.assign(chans.size(), {});
  for (auto& col : rr.recording.columns) col.reserve(static_cast<std::size_t>(n));

  std::vector<double> ref_trace(static_cast<std::size_t>(n));
  std::vector<double> out_trace(static_cast<std::size_t>(n));
  std::vector<double> pv_trace(static_cast<std::size_t>(n));

  std::optional<double> lock_time;
  std::int64_t pll_start_index = -1;
  double feedback = 0.0;
  double prev_v_out = 0.0;
  bool have_prev_out = false;

  for (std::int64_t k = 0; k < n; ++k) {
    const double t = tb.time_at(k);
    const double ref = gen.next();
    if (auto est = zcd.step(ref)) {
      pll.set_reference_frequency(est->hz);
      rr.estimates.push_back(EstimateLog{est->at_time_s, est->hz, gen.frequency_hz()});
    }

    double v_out = 0.0;
    double sw = 0.0;
    double v_inv = 0.0;
    if (pll.has_reference_frequency()) {
      if (pll_start_index < 0) pll_start_index = k;
      if (s.inverter) {
        v_out = s.inverter->in_loop ? pll.step(ref, feedback) : pll.step(ref);
        sw = spwm_step(s.inverter->spwm, v_out, t);
        // The filter integrates the cell average of the trailing interval, so
        // the analog voltage tracks the continuous-time switch edges.
        if (!have_prev_out) {
          prev_v_out = v_out;
          have_prev_out = true;
        }
        v_inv = inv_filter->step(
            spwm_cell_average(s.inverter->spwm, prev_v_out, v_out, t - tb.dt, tb.dt));
        prev_v_out = v_out;
        if (s.inverter->in_loop) feedback = v_inv;
      } else {
        v_out = pll.step(ref);
      }
      if (!lock_time && pll.locked()) lock_time = t;
    } else if (t >= s.zcd.timeout_s) {
      throw timeout_error("run_scenario: no validated zero crossing within " +
                          format_full(s.zcd.timeout_s) + " s");
    }

    ref_trace[static_cast<std::size_t>(k)] = ref;
    out_trace[static_cast<std::size_t>(k)] = v_out;
    pv_trace[static_cast<std::size_t>(k)] = pll.process_variable();

    rr.recording.time.push_back(t);
    for (std::size_t c = 0; c < chans.size(); ++c) {
      double v = 0.0;
      switch (chans[c]) {
        case Channel::ref: v = ref; break;
        case Channel::v_out: v = v_out; break;
        case Channel::zcd_hz: v = zcd.estimate_hz().value_or(0.0); break;
        case Channel::pv: v = pll.process_variable(); break;
        case Channel::u: v = pll.control_output_hz(); break;
        case Channel::f_cmd: v = pll.frequency_command_hz(); break;
        case Channel::nco_phase: v = pll.nco_phase(); break;
        case Channel::locked: v = pll.locked() ? 1.0 : 0.0; break;
        case Channel::sw_level: v = sw; break;
        case Channel::v_inv: v = v_inv; break;
      }
      rr.recording.columns[c].push_back(v);
    }
  }

  Metrics& m = rr.metrics;
  m.scenario_name = s.name;
  m.sample_rate_hz = tb.sample_rate_hz;
  m.duration_s = s.duration_s;
  m.seed = s.seed;

  const double truth_final = gen.frequency_hz();
  for (const auto& e : rr.estimates) {
    if (std::abs(e.hz - e.truth_hz) <= 0.01) {
      m.zcd_settling_s = e.at_time_s;
      break;
    }
  }
  if (!rr.estimates.empty()) {
    m.zcd_final_hz = rr.estimates.back().hz;
    m.zcd_final_error_hz = std::abs(rr.estimates.back().hz - truth_final);
  }
  m.lock_time_s = lock_time;
  m.locked_at_end = pll.locked();

  if (pll_start_index >= 0) {
    const auto dwell_samples =
        static_cast<std::int64_t>(std::llround(s.pll.lock_dwell_s * tb.sample_rate_hz));
    const auto two_periods =
        static_cast<std::int64_t>(std::llround(2.0 * tb.sample_rate_hz / truth_final));
    const std::int64_t window = std::max<std::int64_t>({dwell_samples, two_periods, 2});
    if (n - pll_start_index >= window && window >= 2) {
      const auto offset = static_cast<std::size_t>(n - window);
      std::span<const double> ref_win(ref_trace.data() + offset,
                                      static_cast<std::size_t>(window));
      std::span<const double> out_win(out_trace.data() + offset,
                                      static_cast<std::size_t>(window));
      if (window * tb.dt * truth_final >= 2.0 - 1e-9) {
        // Window shape and f_hz are valid by construction, so the only
        // reachable failure is a trace with no component at the truth
        // frequency (e.g. the reference sat outside the pull range). An
        // unmeasurable phase is an absent metric, not a failed run.
        try {
          m.steady_phase_error_deg = measure_phase_error(ref_win, out_win, truth_final, tb);
        } catch (const config_error&) {
        }
      }
      double acc = 0.0;
      const std::int64_t pv_window = std::min<std::int64_t>(window, dwell_samples > 0 ? dwell_samples : window);
      for (std::int64_t k = n - pv_window; k < n; ++k) {
        acc += pv_trace[static_cast<std::size_t>(k)];
      }
      m.pv_steady = acc / static_cast<double>(pv_window);
    }
  }
  return rr;
}

struct SpectrumRunResult {
  Metrics metrics;
  Recording recording;
};

// Open-loop modulation comparison: the same reference drives an SPWM chain and
// a plain square-wave chain into identical output filters. The filters see
// per-cell averages of the switching waveforms, so the filtered spectra track
// the continuous-time edges; the raw columns keep the two-level samples.
// Spectra are taken after dropping one fundamental period of filter transient.
inline SpectrumRunResult run_spectrum(const Scenario& s, int max_order = 13) {
  validate(s);
  if (!s.inverter) {
    throw config_error("run_spectrum: scenario needs an [inverter] section");
  }
  if (!s.events.empty()) {
    throw config_error("run_spectrum: step events are not meaningful for a spectrum run");
  }
  const TimeBase tb = s.timebase;
  const double f = s.reference.frequency_hz;
  const auto n = static_cast<std::int64_t>(std::llround(s.duration_s * tb.sample_rate_hz));
  const auto skip = static_cast<std::int64_t>(std::llround(tb.sample_rate_hz / f));
  if (n - skip < static_cast<std::int64_t>(std::llround(2.0 * tb.sample_rate_hz / f))) {
    throw config_error("run_spectrum: duration must cover at least three fundamental periods");
  }

  SignalSpec reference = s.reference;
  reference.seed = s.seed;  // the scenario seed is the determinism knob
  SignalGenerator gen(reference, tb, {});
  LowPassFilter spwm_filter(FilterOrder::second, s.inverter->filter_cutoff_hz, tb.dt);
  LowPassFilter square_filter(FilterOrder::second, s.inverter->filter_cutoff_hz, tb.dt);

  const auto un = static_cast<std::size_t>(n);
  std::vector<double> ref(un), spwm_raw(un), spwm_filt(un), square_raw(un), square_filt(un);
  SpectrumRunResult out;
  out.recording.names = {"ref", "spwm_raw", "spwm_filtered", "square_raw", "square_filtered"};
  out.recording.time.reserve(un);

  double prev_r = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double t = tb.time_at(k);
    const double r = gen.next();
    if (k == 0) prev_r = r;
    const auto uk = static_cast<std::size_t>(k);
    ref[uk] = r;
    spwm_raw[uk] = spwm_step(s.inverter->spwm, r, t);
    spwm_filt[uk] = spwm_filter.step(
        spwm_cell_average(s.inverter->spwm, prev_r, r, t - tb.dt, tb.dt));
    square_raw[uk] = square_step(r, s.inverter->spwm.dc_bus_volts);
    square_filt[uk] = square_filter.step(
        square_cell_average(prev_r, r, s.inverter->spwm.dc_bus_volts));
    prev_r = r;
    out.recording.time.push_back(t);
  }
  out.recording.columns = {ref, spwm_raw, spwm_filt, square_raw, square_filt};

  const auto offset = static_cast<std::size_t>(skip);
  std::span<const double> spwm_win(spwm_filt.data() + offset, un - offset);
  std::span<const double> square_win(square_filt.data() + offset, un - offset);
  Metrics& m = out.metrics;
  m.scenario_name = s.name;
  m.sample_rate_hz = tb.sample_rate_hz;
  m.duration_s = s.duration_s;
  m.seed = s.seed;
  m.spwm_spectrum = spectrum(spwm_win, tb, f, max_order);
  m.square_spectrum = spectrum(square_win, tb, f, max_order);
  return out;
}

struct SweepRow {
  double frequency_hz{0.0};
  bool ok{false};
  Metrics metrics{};
  std::string error{};
};

// One run per frequency, template scenario otherwise untouched. Rows are
// independent by construction; failures land in the row instead of aborting
// the sweep.
inline std::vector<SweepRow> sweep(const Scenario& tmpl, double f_start, double f_end,
                                   double f_step) {
  if (!std::isfinite(f_start) || !std::isfinite(f_end) || !std::isfinite(f_step)) {
    throw config_error("sweep: bounds must be finite");
  }
  if (f_start <= 0.0 || f_end < f_start || f_step <= 0.0) {
    throw config_error("sweep: needs 0 < f_start <= f_end and f_step > 0");
  }
  if (f_end >= 0.5 * tmpl.timebase.nyquist_hz()) {
    throw config_error("sweep: f_end must stay below a quarter of the sample rate");
  }
  std::vector<double> freqs;
  for (double f = f_start; f <= f_end + 1e-9; f += f_step) freqs.push_back(f);

  std::vector<SweepRow> rows(freqs.size());
  auto run_row = [&tmpl](double f) {
    SweepRow row;
    row.frequency_hz = f;
    Scenario s = tmpl;
    s.reference.frequency_hz = f;
    s.name = tmpl.name + "@" + format_full(f);
    try {
      row.metrics = run_scenario(s).metrics;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::vector<std::future<SweepRow>> inflight;
  std::size_t next = 0;
  std::size_t done = 0;
  while (done < freqs.size()) {
    while (next < freqs.size() && inflight.size() < workers) {
      inflight.push_back(std::async(std::launch::async, run_row, freqs[next]));
      ++next;
    }
    rows[done] = inflight.front().get();
    inflight.erase(inflight.begin());
    ++done;
  }
  return rows;
}

namespace detail {

inline std::string opt_text(const std::optional<double>& v) {
  return v ? format_full(*v) : "none";
}

}  // namespace detail

inline void emit_report(const Metrics& m, std::ostream& os) {
  os << "scenario=" << m.scenario_name << '\n';
  os << "sample_rate_hz=" << format_full(m.sample_rate_hz) << '\n';
  os << "duration_s=" << format_full(m.duration_s) << '\n';
  os << "seed=" << m.seed << '\n';
  os << "zcd_settling_s=" << detail::opt_text(m.zcd_settling_s) << '\n';
  os << "zcd_final_hz=" << detail::opt_text(m.zcd_final_hz) << '\n';
  os << "zcd_final_error_hz=" << detail::opt_text(m.zcd_final_error_hz) << '\n';
  os << "lock_time_s=" << detail::opt_text(m.lock_time_s) << '\n';
  os << "locked=" << (m.locked_at_end ? 1 : 0) << '\n';
  os << "steady_phase_error_deg=" << detail::opt_text(m.steady_phase_error_deg) << '\n';
  os << "pv_steady=" << detail::opt_text(m.pv_steady) << '\n';
  auto emit_spectrum = [&os](const char* prefix, const SpectrumResult& sr) {
    os << prefix << "_fundamental_hz=" << format_full(sr.fundamental_hz) << '\n';
    os << prefix << "_thd=" << format_full(sr.thd) << '\n';
    for (std::size_t i = 0; i < sr.magnitudes.size(); ++i) {
      os << prefix << "_m" << (i + 1) << '=' << format_full(sr.magnitudes[i]) << '\n';
    }
    if (sr.magnitudes.size() >= 3) {
      os << prefix << "_rel3=" << format_full(sr.relative(3)) << '\n';
    }
  };
  if (m.spwm_spectrum) emit_spectrum("spwm", *m.spwm_spectrum);
  if (m.square_spectrum) emit_spectrum("square", *m.square_spectrum);
}

inline void emit_report(const Metrics& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("emit_report: cannot open " + path);
  emit_report(m, os);
  os.flush();
  if (!os) throw io_error("emit_report: write failed for " + path);
}

inline void emit_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os << "frequency_hz,zcd_settling_s,zcd_final_hz,zcd_final_error_hz,lock_time_s,locked,"
        "steady_phase_error_deg,pv_steady,error\n";
  for (const auto& row : rows) {
    os << format_full(row.frequency_hz) << ',';
    if (row.ok) {
      const Metrics& m = row.metrics;
      os << detail::opt_text(m.zcd_settling_s) << ',' << detail::opt_text(m.zcd_final_hz) << ','
         << detail::opt_text(m.zcd_final_error_hz) << ',' << detail::opt_text(m.lock_time_s)
         << ',' << (m.locked_at_end ? 1 : 0) << ',' << detail::opt_text(m.steady_phase_error_deg)
         << ',' << detail::opt_text(m.pv_steady) << ',';
    } else {
      os << "none,none,none,none,0,none,none,";
    }
    std::string msg = row.error;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), ',', ';');
    os << '"' << msg << '"' << '\n';
  }
}

inline void emit_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("emit_sweep_csv: cannot open " + path);
  emit_sweep_csv(rows, os);
  os.flush();
  if (!os) throw io_error("emit_sweep_csv: write failed for " + path);
}

}  // namespace gridsync
