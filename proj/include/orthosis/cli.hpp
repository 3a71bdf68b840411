#pragma once

// Command-line entry point. Exit codes: 0 success, 1 trial or I/O failure,
// 2 usage or configuration error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "orthosis/bridge_server.hpp"
#include "orthosis/errors.hpp"
#include "orthosis/session_io.hpp"
#include "orthosis/trials.hpp"

namespace orthosis::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTrialError = 1;
inline constexpr int kExitConfigError = 2;

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> trials;
};

namespace detail {

inline std::atomic<bool> g_stop{false};

inline void on_signal(int) { g_stop = true; }

inline session::SessionConfig resolve_config(const CommonOptions& opts) {
  session::SessionConfig cfg;
  if (!opts.config_path.empty()) {
    if (!fs::exists(opts.config_path)) {
      throw ConfigError("--config", "file not found: " + opts.config_path);
    }
    cfg = session::load_config(opts.config_path);
  }
  if (!opts.mode.empty()) {
    try {
      cfg.sim.mode = control::mode_from_name(opts.mode);
    } catch (const InvalidInput& e) {
      throw ConfigError("--mode", e.what());
    }
  }
  if (opts.seed) cfg.participant.rng_seed = *opts.seed;
  if (const char* env = std::getenv(session::kOutputEnvVar); env != nullptr && *env != '\0') {
    cfg.output_dir = env;
  }
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  return cfg;
}

inline std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string mode_label(const control::ControlMode& mode) {
  return std::string(control::mode_name(mode));
}

inline void write_summary(const fs::path& path, const std::string& text) {
  session::write_text(path, text);
}

inline int run_calibrate(const session::SessionConfig& cfg, std::ostream& out) {
  const auto& p = cfg.sim.plant;
  const auto doc = session::config_to_json(cfg)["plant"];
  write_summary(fs::path(cfg.output_dir) / "calibration.json", doc.dump(2) + "\n");
  out << "tenodesis max force  " << fixed(p.tenodesis.max_force, 4) << " N ("
      << fixed(p.tenodesis.onset_angle, 1) << " -> " << fixed(p.tenodesis.saturation_angle, 1)
      << " deg)\n";
  out << "device stiffness     " << fixed(p.contact.device_stiffness, 4)
      << " N/unit (contact at " << fixed(p.contact.contact_excursion, 3) << ")\n";
  const control::MotorState open{0.0, cfg.sim.motor.speed, cfg.sim.motor.upper_limit};
  const control::MotorState closed{cfg.sim.motor.upper_limit, cfg.sim.motor.speed,
                                   cfg.sim.motor.upper_limit};
  const auto no_device = plant::plant_step(open, cfg.anchors.no_device_angle, p);
  const auto with_device = plant::plant_step(closed, cfg.anchors.with_device_angle, p);
  out << "no-device anchor     " << fixed(no_device.true_force, 3) << " N true, "
      << fixed(no_device.measured_force, 2) << " N measured at "
      << fixed(cfg.anchors.no_device_angle, 1) << " deg\n";
  out << "with-device anchor   " << fixed(with_device.true_force, 3) << " N true, "
      << fixed(with_device.measured_force, 2) << " N measured at "
      << fixed(cfg.anchors.with_device_angle, 1) << " deg\n";
  return kExitOk;
}

inline int run_maxforce(const session::SessionConfig& cfg, std::ostream& out) {
  const auto mode = mode_label(cfg.sim.mode);
  const auto result = trials::run_max_force(cfg.sim, cfg.participant, cfg.protocol);
  const fs::path dir = fs::path(cfg.output_dir) / "maxforce" / mode;
  for (std::size_t i = 0; i < result.traces.size(); ++i) {
    session::write_log(dir / ("trial_" + std::to_string(i + 1) + ".csv"), result.traces[i]);
  }
  std::ostringstream summary;
  session::write_max_force_summary(summary, mode, result);
  write_summary(dir / "summary.csv", summary.str());
  out << "mode " << mode << ": average max " << fixed(result.average_max) << " N, highest max "
      << fixed(result.highest_max) << " N over " << result.peaks.size() << " trials\n";
  return kExitOk;
}

struct ModeReport {
  std::string mode;
  trials::MaxForceResult max_force;
  std::vector<trials::TargetOutcomes> targets;
};

inline ModeReport run_mode_battery(const session::SessionConfig& cfg, const fs::path& dir) {
  ModeReport report{mode_label(cfg.sim.mode), {}, {}};
  report.max_force = trials::run_max_force(cfg.sim, cfg.participant, cfg.protocol);
  report.targets = trials::run_modulation_battery(cfg.sim, cfg.participant, cfg.protocol,
                                                  report.max_force.highest_max);
  for (const auto& t : report.targets) {
    for (std::size_t r = 0; r < t.outcomes.size(); ++r) {
      session::write_log(dir / ("target_" + std::to_string(t.target.percent) + "_rep_" +
                                std::to_string(r + 1) + ".csv"),
                         t.outcomes[r].trace);
    }
  }
  return report;
}

inline void print_table(std::ostream& out, const std::vector<ModeReport>& reports) {
  out << std::left << std::setw(9) << "mode" << std::right << std::setw(9) << "avg max"
      << std::setw(9) << "highest" << std::setw(8) << "target" << std::setw(9) << "force"
      << std::setw(10) << "avg time" << std::setw(11) << "successes" << '\n';
  for (const auto& r : reports) {
    for (const auto& t : r.targets) {
      out << std::left << std::setw(9) << r.mode << std::right << std::setw(9)
          << fixed(r.max_force.average_max) << std::setw(9) << fixed(r.max_force.highest_max)
          << std::setw(7) << t.target.percent << '%' << std::setw(9) << fixed(t.target.display, 1)
          << std::setw(10) << (t.average_time ? fixed(*t.average_time) : std::string("-"))
          << std::setw(9) << t.successes << '/' << t.outcomes.size() << '\n';
    }
  }
}

inline int run_modulate(const session::SessionConfig& cfg, std::ostream& out) {
  const fs::path dir = fs::path(cfg.output_dir) / "modulate" / mode_label(cfg.sim.mode);
  const auto report = run_mode_battery(cfg, dir);
  std::ostringstream summary;
  session::write_modulation_summary(summary, report.mode, report.max_force, report.targets);
  write_summary(dir / "summary.csv", summary.str());
  print_table(out, {report});
  return kExitOk;
}

inline int run_compare(session::SessionConfig cfg, std::ostream& out) {
  const fs::path root = fs::path(cfg.output_dir) / "compare";
  std::vector<ModeReport> reports;
  std::ostringstream summary;
  bool header = true;
  for (const char* name : {"twa", "bwa", "pwa", "passive"}) {
    cfg.sim.mode = control::mode_from_name(name);
    reports.push_back(run_mode_battery(cfg, root / name));
    session::write_modulation_summary(summary, reports.back().mode, reports.back().max_force,
                                      reports.back().targets, header);
    header = false;
  }
  write_summary(root / "summary.csv", summary.str());
  print_table(out, reports);
  return kExitOk;
}

inline int run_grt(const session::SessionConfig& cfg, std::ostream& out) {
  const auto mode = mode_label(cfg.sim.mode);
  const fs::path dir = fs::path(cfg.output_dir) / "grt" / mode;
  const auto score = trials::run_functional_battery(cfg.protocol.objects, cfg.sim, cfg.participant,
                                                    cfg.protocol.grt_window);
  for (const auto& obj : score.objects) session::write_log(dir / (obj.name + ".csv"), obj.trace);
  std::ostringstream summary;
  session::write_grt_summary(summary, mode, cfg.protocol.objects, score);
  write_summary(dir / "summary.csv", summary.str());
  for (const auto& obj : score.objects) {
    out << std::left << std::setw(16) << obj.name << std::right << std::setw(4) << obj.successes
        << '\n';
  }
  out << std::left << std::setw(16) << "total" << std::right << std::setw(4) << score.total << '\n';
  return kExitOk;
}

inline int run_replay(const session::SessionConfig& cfg, const std::string& log_path,
                      const std::string& imu_path, std::ostream& out, std::ostream& err) {
  const fs::path dir = fs::path(cfg.output_dir) / "replay";
  if (!imu_path.empty()) {
    std::ifstream in(imu_path, std::ios::binary);
    if (!in) throw Error("cannot open orientation file '" + imu_path + "'");
    const auto stream = session::read_orientation_csv(in);
    const auto angles = session::orientation_to_angles(stream, {}, cfg.sim.tick_rate,
                                                       cfg.sim.anatomical_limit);
    Simulator sim(cfg.sim);
    std::vector<TickLogRow> rows;
    for (double a : angles) {
      sim.step(a);
      rows.push_back(sim.row());
    }
    const auto path = dir / (fs::path(imu_path).stem().string() + "_replay.csv");
    session::write_log(path, rows);
    out << "replayed " << rows.size() << " orientation samples -> " << path.string() << '\n';
    return kExitOk;
  }
  const auto source = session::read_log(fs::path(log_path));
  const auto rows = session::replay(cfg.sim, source);
  const auto path = dir / (fs::path(log_path).stem().string() + "_replay.csv");
  session::write_log(path, rows);
  if (const auto bad = session::first_mismatch(source, rows)) {
    err << "replay diverges from the source log at data row " << *bad + 1 << '\n';
    return kExitTrialError;
  }
  out << "replay of " << rows.size() << " rows matches the source log\n";
  return kExitOk;
}

inline int run_serve(const session::SessionConfig& cfg, int port, std::ostream& out) {
  bridge::BridgeServer server(cfg);
  server.session().set_log_dir(fs::path(cfg.output_dir) / "bridge");
  server.start(port, true);
  out << "bridge listening on 127.0.0.1:" << server.port() << '\n' << std::flush;
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
  return kExitOk;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Wrist-controlled orthosis simulator", "orthosis_sim"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string log_path;
  std::string imu_path;
  int seeds = 0;
  int port = session::kDefaultPort;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Session config (JSON)");
    sub->add_option("--mode", opts.mode, "Control mode: twa, bwa, pwa, passive");
    sub->add_option("--seed", opts.seed, "Participant RNG seed");
    sub->add_option("--out", opts.out, "Output directory");
    sub->add_option("--trials", opts.trials, "Max-force trials / modulation repeats")
        ->check(CLI::PositiveNumber);
  };
  auto* calibrate = app.add_subcommand("calibrate", "Solve plant parameters from the anchors");
  auto* maxforce = app.add_subcommand("maxforce", "Maximum grasp force test");
  auto* modulate = app.add_subcommand("modulate", "Force modulation battery for one mode");
  auto* grt = app.add_subcommand("grt", "Grasp-and-release functional battery");
  auto* compare = app.add_subcommand("compare", "Modulation battery under TWA, BWA, PWA, passive");
  auto* replay = app.add_subcommand("replay", "Re-simulate a recorded wrist stream");
  auto* serve = app.add_subcommand("serve", "Run the real-time bridge");
  for (auto* sub : {calibrate, maxforce, modulate, grt, compare, replay, serve}) add_common(sub);
  compare->add_option("--seeds", seeds, "Repeats per target (seeds seed..seed+N-1)")
      ->check(CLI::PositiveNumber);
  auto* log_opt = replay->add_option("--log", log_path, "Tick log CSV to replay");
  auto* imu_opt = replay->add_option("--imu", imu_path, "Orientation CSV to replay");
  log_opt->excludes(imu_opt);
  serve->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    auto cfg = detail::resolve_config(opts);
    if (opts.trials) {
      cfg.protocol.max_force_trials = *opts.trials;
      cfg.protocol.repeats = *opts.trials;
    }
    if (seeds > 0) cfg.protocol.repeats = seeds;

    if (*calibrate) return detail::run_calibrate(cfg, out);
    if (*maxforce) return detail::run_maxforce(cfg, out);
    if (*modulate) return detail::run_modulate(cfg, out);
    if (*grt) return detail::run_grt(cfg, out);
    if (*compare) return detail::run_compare(cfg, out);
    if (*replay) {
      if (log_path.empty() && imu_path.empty()) {
        err << "replay: one of --log or --imu is required\n";
        return kExitConfigError;
      }
      return detail::run_replay(cfg, log_path, imu_path, out, err);
    }
    if (*serve) return detail::run_serve(cfg, serve->count("--port") ? port : cfg.port, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitTrialError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitTrialError;
  }
  return kExitConfigError;
}

}  // namespace orthosis::cli
