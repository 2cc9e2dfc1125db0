// Scenario driver for the grid synchronization pipeline. Subcommands:
//   run       execute one scenario, write traces.csv and metrics.txt
//   sweep     repeat a scenario across a frequency range, write sweep.csv
//   spectrum  SPWM vs square-wave comparison through the output filter
//   lock      phase-lock experiment with lock telemetry on stdout

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridsync/gridsync.hpp"

namespace {

struct CommonArgs {
  std::string scenario_path;
  std::string out_dir{"."};
  std::optional<std::uint64_t> seed;
  std::optional<double> sample_rate_hz;
  std::optional<double> duration_s;
  bool quiet{false};
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("scenario", args.scenario_path, "scenario file")->required();
  cmd->add_option("--out", args.out_dir, "output directory (created if missing)");
  cmd->add_option("--seed", args.seed, "override the scenario seed");
  cmd->add_option("--sample-rate", args.sample_rate_hz, "override sample_rate_hz");
  cmd->add_option("--duration", args.duration_s, "override duration_s");
  cmd->add_flag("--quiet", args.quiet, "suppress the stdout summary");
}

gridsync::Scenario load_with_overrides(const CommonArgs& args) {
  gridsync::Scenario s = gridsync::load_scenario_file(args.scenario_path);
  if (args.seed) {
    s.seed = *args.seed;
    s.reference.seed = *args.seed;
  }
  if (args.sample_rate_hz) s.timebase = gridsync::TimeBase(*args.sample_rate_hz);
  if (args.duration_s) s.duration_s = *args.duration_s;
  gridsync::validate(s);
  return s;
}

std::string out_path(const CommonArgs& args, const std::string& file) {
  std::filesystem::create_directories(args.out_dir);
  return (std::filesystem::path(args.out_dir) / file).string();
}

std::string opt_line(const std::optional<double>& v, const char* unit) {
  if (!v) return "n/a";
  return gridsync::format_full(*v) + std::string(" ") + unit;
}

void print_run_summary(const gridsync::Metrics& m) {
  std::cout << "scenario " << m.scenario_name << ": " << gridsync::format_full(m.duration_s)
            << " s at " << gridsync::format_full(m.sample_rate_hz) << " Hz\n";
  std::cout << "  zcd settling: " << opt_line(m.zcd_settling_s, "s") << "\n";
  std::cout << "  zcd final estimate: " << opt_line(m.zcd_final_hz, "Hz")
            << " (error " << opt_line(m.zcd_final_error_hz, "Hz") << ")\n";
  std::cout << "  lock time: " << opt_line(m.lock_time_s, "s")
            << (m.locked_at_end ? " (locked at end)" : " (not locked at end)") << "\n";
  std::cout << "  steady phase error: " << opt_line(m.steady_phase_error_deg, "deg") << "\n";
  std::cout << "  pv steady: " << opt_line(m.pv_steady, "") << "\n";
}

int cmd_run(const CommonArgs& args, bool lock_focus) {
  gridsync::Scenario s = load_with_overrides(args);
  if (lock_focus) {
    for (const char* ch : {"ref", "v_out", "pv", "u", "f_cmd", "locked"}) {
      bool have = false;
      for (const auto& existing : s.record) have = have || existing == ch;
      if (!have) s.record.emplace_back(ch);
    }
    gridsync::validate(s);
  }
  gridsync::RunResult rr = gridsync::run_scenario(s);
  gridsync::emit_csv(rr.recording, out_path(args, "traces.csv"));
  gridsync::emit_report(rr.metrics, out_path(args, "metrics.txt"));
  if (!args.quiet) {
    print_run_summary(rr.metrics);
    if (lock_focus) {
      std::cout << "  setpoint: 0.5, lock band: " << gridsync::format_full(s.pll.lock_band)
                << ", dwell: " << gridsync::format_full(s.pll.lock_dwell_s) << " s\n";
    }
  }
  return 0;
}

int cmd_sweep(const CommonArgs& args, double from, double to, double step) {
  gridsync::Scenario s = load_with_overrides(args);
  std::vector<gridsync::SweepRow> rows = gridsync::sweep(s, from, to, step);
  gridsync::emit_sweep_csv(rows, out_path(args, "sweep.csv"));
  std::size_t failures = 0;
  double worst = 0.0;
  for (const auto& row : rows) {
    if (!row.ok) {
      ++failures;
      if (!args.quiet) {
        std::cout << "  " << gridsync::format_full(row.frequency_hz) << " Hz: FAILED: "
                  << row.error << "\n";
      }
      continue;
    }
    if (row.metrics.zcd_final_error_hz) {
      worst = std::max(worst, *row.metrics.zcd_final_error_hz);
    }
  }
  if (!args.quiet) {
    std::cout << rows.size() << " rows, " << failures << " failed, worst final error "
              << gridsync::format_full(worst) << " Hz\n";
  }
  return failures == 0 ? 0 : 1;
}

int cmd_spectrum(const CommonArgs& args) {
  gridsync::Scenario s = load_with_overrides(args);
  gridsync::SpectrumRunResult sr = gridsync::run_spectrum(s);
  gridsync::emit_csv(sr.recording, out_path(args, "traces.csv"));
  gridsync::emit_report(sr.metrics, out_path(args, "metrics.txt"));
  if (!args.quiet) {
    const auto& spwm = *sr.metrics.spwm_spectrum;
    const auto& square = *sr.metrics.square_spectrum;
    std::cout << "fundamental " << gridsync::format_full(spwm.fundamental_hz) << " Hz\n";
    std::cout << "  spwm:   m1 " << gridsync::format_full(spwm.magnitude(1)) << ", rel m3 "
              << gridsync::format_full(spwm.relative(3)) << ", thd "
              << gridsync::format_full(spwm.thd) << "\n";
    std::cout << "  square: m1 " << gridsync::format_full(square.magnitude(1)) << ", rel m3 "
              << gridsync::format_full(square.relative(3)) << ", thd "
              << gridsync::format_full(square.thd) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grid synchronization scenario driver"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "execute one scenario");
  add_common(run_cmd, run_args);

  CommonArgs sweep_args;
  double from = 0.0;
  double to = 0.0;
  double step = 0.0;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "repeat a scenario across frequencies");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--from", from, "start frequency in Hz")->required();
  sweep_cmd->add_option("--to", to, "end frequency in Hz")->required();
  sweep_cmd->add_option("--step", step, "frequency increment in Hz")->required();

  CommonArgs spectrum_args;
  CLI::App* spectrum_cmd = app.add_subcommand("spectrum", "SPWM vs square-wave comparison");
  add_common(spectrum_cmd, spectrum_args);

  CommonArgs lock_args;
  CLI::App* lock_cmd = app.add_subcommand("lock", "phase-lock experiment");
  add_common(lock_cmd, lock_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run_args, false);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, from, to, step);
    if (spectrum_cmd->parsed()) return cmd_spectrum(spectrum_args);
    if (lock_cmd->parsed()) return cmd_run(lock_args, true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
