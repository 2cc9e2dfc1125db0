#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "inverter.hpp"
#include "pll.hpp"
#include "signal.hpp"
#include "timebase.hpp"
#include "zcd.hpp"

namespace gridsync {

struct ZcdOptions {
  HysteresisBand band{};
  double smoothing{0.0};
  double timeout_s{0.5};  // deadline for the first validated crossing
};

struct InverterOptions {
  SpwmConfig spwm{};
  double filter_cutoff_hz{300.0};
  bool in_loop{false};  // feed the filtered inverter voltage back into the detector
};

enum class Channel {
  ref,
  v_out,
  zcd_hz,
  pv,
  u,
  f_cmd,
  nco_phase,
  locked,
  sw_level,
  v_inv,
};

inline Channel channel_from_name(const std::string& name) {
  if (name == "ref") return Channel::ref;
  if (name == "v_out") return Channel::v_out;
  if (name == "zcd_hz") return Channel::zcd_hz;
  if (name == "pv") return Channel::pv;
  if (name == "u") return Channel::u;
  if (name == "f_cmd") return Channel::f_cmd;
  if (name == "nco_phase") return Channel::nco_phase;
  if (name == "locked") return Channel::locked;
  if (name == "sw_level") return Channel::sw_level;
  if (name == "v_inv") return Channel::v_inv;
  if (name == "time" || name == "time_s") {
    throw config_error("record: time_s is always the first column, do not list it");
  }
  throw config_error("record: unknown channel '" + name + "'");
}

inline bool channel_needs_inverter(Channel c) {
  return c == Channel::sw_level || c == Channel::v_inv;
}

inline std::vector<std::string> default_record_channels() {
  return {"ref", "v_out", "zcd_hz", "pv", "u", "f_cmd", "locked"};
}

struct Scenario {
  std::string name{"scenario"};
  TimeBase timebase{};
  double duration_s{1.0};
  std::uint64_t seed{0};
  SignalSpec reference{};
  std::vector<StepEvent> events{};
  ZcdOptions zcd{};
  PllConfig pll{};
  std::optional<InverterOptions> inverter{};
  std::vector<std::string> record{default_record_channels()};
};

inline void validate(const Scenario& s) {
  if (s.name.empty()) throw config_error("Scenario: name must not be empty");
  if (!std::isfinite(s.duration_s) || s.duration_s <= 0.0) {
    throw config_error("Scenario: duration_s must be finite and positive");
  }
  double samples = s.duration_s * s.timebase.sample_rate_hz;
  if (samples > 1e7) {
    throw config_error("Scenario: duration_s * sample_rate_hz exceeds the 1e7 sample budget");
  }
  validate(s.reference, s.timebase);
  validate(s.events, s.timebase);
  validate(s.zcd.band);
  if (!std::isfinite(s.zcd.smoothing) || s.zcd.smoothing < 0.0 || s.zcd.smoothing >= 1.0) {
    throw config_error("Scenario: zcd smoothing must lie in [0, 1)");
  }
  if (!std::isfinite(s.zcd.timeout_s) || s.zcd.timeout_s <= 0.0) {
    throw config_error("Scenario: zcd timeout_s must be finite and positive");
  }
  if (s.reference.amplitude > 0.0) {
    if (s.reference.dc_offset + s.reference.amplitude <= s.zcd.band.positive_level ||
        s.reference.dc_offset - s.reference.amplitude >= s.zcd.band.negative_level) {
      throw config_error(
          "Scenario: reference excursion cannot reach both hysteresis levels; "
          "shrink the band or raise the amplitude");
    }
  }
  validate(s.pll, s.timebase);
  if (s.inverter) {
    double f_max = s.reference.frequency_hz;
    for (const auto& ev : s.events) {
      if (ev.new_frequency_hz) f_max = std::max(f_max, *ev.new_frequency_hz);
    }
    validate(s.inverter->spwm, f_max, s.timebase);
    if (!std::isfinite(s.inverter->filter_cutoff_hz) || s.inverter->filter_cutoff_hz <= 0.0 ||
        s.inverter->filter_cutoff_hz >= s.timebase.nyquist_hz()) {
      throw config_error("Scenario: inverter filter_cutoff_hz must be positive and below Nyquist");
    }
    if (s.inverter->in_loop) {
      if (s.pll.detector_mode != DetectorMode::product) {
        throw config_error("Scenario: in_loop inverter feedback requires the product detector");
      }
      if (s.pll.phase_shift_rad != 0.0) {
        throw config_error(
            "Scenario: phase_shift_rad has no effect when the inverter closes the loop");
      }
    }
  }
  if (s.record.empty()) throw config_error("Scenario: record must list at least one channel");
  std::set<std::string> seen;
  for (const auto& name : s.record) {
    Channel c = channel_from_name(name);
    if (!seen.insert(name).second) {
      throw config_error("Scenario: duplicate record channel '" + name + "'");
    }
    if (channel_needs_inverter(c) && !s.inverter) {
      throw config_error("Scenario: channel '" + name + "' requires an [inverter] section");
    }
  }
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] inline void fail_at(std::size_t line_no, const std::string& what) {
  throw config_error("scenario line " + std::to_string(line_no) + ": " + what);
}

inline double parse_double(const std::string& v, std::size_t line_no) {
  const char* begin = v.c_str();
  char* end = nullptr;
  double x = std::strtod(begin, &end);
  if (end == begin || *end != '\0') fail_at(line_no, "expected a number, got '" + v + "'");
  if (!std::isfinite(x)) fail_at(line_no, "value must be finite");
  return x;
}

inline std::uint64_t parse_u64(const std::string& v, std::size_t line_no) {
  if (v.empty() || v[0] == '-') fail_at(line_no, "expected a non-negative integer, got '" + v + "'");
  const char* begin = v.c_str();
  char* end = nullptr;
  unsigned long long x = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0') {
    fail_at(line_no, "expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::uint64_t>(x);
}

inline int parse_int(const std::string& v, std::size_t line_no) {
  const char* begin = v.c_str();
  char* end = nullptr;
  long x = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') fail_at(line_no, "expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

inline bool parse_bool(const std::string& v, std::size_t line_no) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail_at(line_no, "expected true or false, got '" + v + "'");
}

inline std::vector<std::string> parse_channel_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Flat text scenario format: top-level keys first, then [section] blocks of
// key = value lines. [reference.step] and [reference.harmonic] may repeat;
// every other section may appear once. Unknown sections and keys are errors.
inline Scenario parse_scenario_text(const std::string& text) {
  using detail::fail_at;
  Scenario s;
  s.record = default_record_channels();

  std::istringstream is(text);
  std::string raw;
  std::size_t line_no = 0;
  std::string section;  // empty means top level
  std::set<std::string> keys_in_section;
  std::set<std::string> sections_seen;

  auto claim_key = [&](const std::string& key, std::size_t ln) {
    if (!keys_in_section.insert(key).second) {
      fail_at(ln, "duplicate key '" + key + "'" +
                      (section.empty() ? std::string() : " in [" + section + "]"));
    }
  };

  while (std::getline(is, raw)) {
    ++line_no;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail_at(line_no, "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      keys_in_section.clear();
      if (section == "reference.step") {
        s.events.emplace_back();
        s.events.back().at_time_s = -1.0;  // must be set explicitly
      } else if (section == "reference.harmonic") {
        s.reference.harmonics.emplace_back();
        s.reference.harmonics.back().relative_amplitude = -1.0;  // must be set explicitly
      } else if (section == "timebase" || section == "reference" || section == "zcd" ||
                 section == "pll" || section == "inverter") {
        if (!sections_seen.insert(section).second) {
          fail_at(line_no, "section [" + section + "] appears twice");
        }
        if (section == "inverter") s.inverter.emplace();
      } else {
        fail_at(line_no, "unknown section [" + section + "]");
      }
      continue;
    }

    auto eq = line.find('=');
    if (eq == std::string::npos) fail_at(line_no, "expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail_at(line_no, "empty key");
    if (value.empty()) fail_at(line_no, "empty value for '" + key + "'");
    claim_key(key, line_no);

    if (section.empty()) {
      if (key == "name") s.name = value;
      else if (key == "duration_s") s.duration_s = detail::parse_double(value, line_no);
      else if (key == "seed") s.seed = detail::parse_u64(value, line_no);
      else if (key == "record") s.record = detail::parse_channel_list(value);
      else fail_at(line_no, "unknown top-level key '" + key + "'");
    } else if (section == "timebase") {
      if (key == "sample_rate_hz") {
        double fs = detail::parse_double(value, line_no);
        if (fs <= 0.0) fail_at(line_no, "sample_rate_hz must be positive");
        s.timebase = TimeBase(fs);
      } else fail_at(line_no, "unknown key '" + key + "' in [timebase]");
    } else if (section == "reference") {
      if (key == "amplitude") s.reference.amplitude = detail::parse_double(value, line_no);
      else if (key == "frequency_hz") s.reference.frequency_hz = detail::parse_double(value, line_no);
      else if (key == "phase_rad") s.reference.phase_rad = detail::parse_double(value, line_no);
      else if (key == "dc_offset") s.reference.dc_offset = detail::parse_double(value, line_no);
      else if (key == "noise_std") s.reference.noise_std = detail::parse_double(value, line_no);
      else fail_at(line_no, "unknown key '" + key + "' in [reference]");
    } else if (section == "reference.harmonic") {
      Harmonic& h = s.reference.harmonics.back();
      if (key == "order") h.order = detail::parse_int(value, line_no);
      else if (key == "relative_amplitude") h.relative_amplitude = detail::parse_double(value, line_no);
      else if (key == "phase_rad") h.phase_rad = detail::parse_double(value, line_no);
      else fail_at(line_no, "unknown key '" + key + "' in [reference.harmonic]");
    } else if (section == "reference.step") {
      StepEvent& ev = s.events.back();
      if (key == "at_time_s") ev.at_time_s = detail::parse_double(value, line_no);
      else if (key == "new_frequency_hz") ev.new_frequency_hz = detail::parse_double(value, line_no);
      else if (key == "phase_jump_rad") ev.phase_jump_rad = detail::parse_double(value, line_no);
      else fail_at(line_no, "unknown key '" + key + "' in [reference.step]");
    } else if (section == "zcd") {
      if (key == "positive_level") s.zcd.band.positive_level = detail::parse_double(value, line_no);
      else if (key == "negative_level") s.zcd.band.negative_level = detail::parse_double(value, line_no);
      else if (key == "smoothing") s.zcd.smoothing = detail::parse_double(value, line_no);
      else if (key == "timeout_s") s.zcd.timeout_s = detail::parse_double(value, line_no);
      else fail_at(line_no, "unknown key '" + key + "' in [zcd]");
    } else if (section == "pll") {
      if (key == "detector_mode") {
        if (value == "product") s.pll.detector_mode = DetectorMode::product;
        else if (value == "quadrature") s.pll.detector_mode = DetectorMode::quadrature;
        else fail_at(line_no, "detector_mode must be product or quadrature");
      } else if (key == "loop_filter_order") {
        int order = detail::parse_int(value, line_no);
        if (order == 1) s.pll.loop_filter_order = FilterOrder::first;
        else if (order == 2) s.pll.loop_filter_order = FilterOrder::second;
        else fail_at(line_no, "loop_filter_order must be 1 or 2");
      } else if (key == "loop_filter_cutoff_hz") s.pll.loop_filter_cutoff_hz = detail::parse_double(value, line_no);
      else if (key == "kp") s.pll.kp = detail::parse_double(value, line_no);
      else if (key == "ki") s.pll.ki = detail::parse_double(value, line_no);
      else if (key == "kd") s.pll.kd = detail::parse_double(value, line_no);
      else if (key == "out_min_hz") s.pll.pid_out_min_hz = detail::parse_double(value, line_no);
      else if (key == "out_max_hz") s.pll.pid_out_max_hz = detail::parse_double(value, line_no);
      else if (key == "anti_windup") s.pll.anti_windup = detail::parse_bool(value, line_no);
      else if (key == "phase_shift_rad") s.pll.phase_shift_rad = detail::parse_double(value, line_no);
      else if (key == "lock_band") s.pll.lock_band = detail::parse_double(value, line_no);
      else if (key == "lock_dwell_s") s.pll.lock_dwell_s = detail::parse_double(value, line_no);
      else if (key == "f_min_hz") s.pll.f_min_hz = detail::parse_double(value, line_no);
      else if (key == "f_max_hz") s.pll.f_max_hz = detail::parse_double(value, line_no);
      else if (key == "max_clamp_s") s.pll.max_clamp_s = detail::parse_double(value, line_no);
      else if (key == "initial_nco_phase_rad") s.pll.initial_nco_phase_rad = detail::parse_double(value, line_no);
      else fail_at(line_no, "unknown key '" + key + "' in [pll]");
    } else if (section == "inverter") {
      InverterOptions& inv = *s.inverter;
      if (key == "carrier_hz") inv.spwm.carrier_hz = detail::parse_double(value, line_no);
      else if (key == "modulation_index") inv.spwm.modulation_index = detail::parse_double(value, line_no);
      else if (key == "dc_bus_volts") inv.spwm.dc_bus_volts = detail::parse_double(value, line_no);
      else if (key == "scheme") {
        if (value == "bipolar") inv.spwm.scheme = SwitchingScheme::bipolar;
        else if (value == "unipolar") inv.spwm.scheme = SwitchingScheme::unipolar;
        else fail_at(line_no, "scheme must be bipolar or unipolar");
      } else if (key == "filter_cutoff_hz") inv.filter_cutoff_hz = detail::parse_double(value, line_no);
      else if (key == "in_loop") inv.in_loop = detail::parse_bool(value, line_no);
      else fail_at(line_no, "unknown key '" + key + "' in [inverter]");
    }
  }

  for (std::size_t i = 0; i < s.events.size(); ++i) {
    if (s.events[i].at_time_s < 0.0) {
      throw config_error("scenario: [reference.step] " + std::to_string(i + 1) +
                         " never set at_time_s");
    }
  }
  for (std::size_t i = 0; i < s.reference.harmonics.size(); ++i) {
    if (s.reference.harmonics[i].relative_amplitude < 0.0) {
      throw config_error("scenario: [reference.harmonic] " + std::to_string(i + 1) +
                         " never set relative_amplitude");
    }
  }
  std::sort(s.events.begin(), s.events.end(),
            [](const StepEvent& a, const StepEvent& b) { return a.at_time_s < b.at_time_s; });
  s.reference.seed = s.seed;
  validate(s);
  return s;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("load_scenario_file: cannot open " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_scenario_text(buffer.str());
}

}  // namespace gridsync
