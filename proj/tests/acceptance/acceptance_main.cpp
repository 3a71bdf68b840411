// Runs every acceptance criterion end to end and prints one line per
// criterion. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "orthosis/cli.hpp"
#include "orthosis/trials.hpp"

using namespace orthosis;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED(" << what << ")";
    }
  }
};

using Criterion = std::function<void(Verdict&)>;

SimulationConfig sim_with(control::ControlMode mode) {
  SimulationConfig cfg;
  cfg.mode = mode;
  return cfg;
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

const TickLogRow& peak_row(const std::vector<TickLogRow>& trace) {
  const TickLogRow* best = &trace.front();
  for (const auto& r : trace) {
    if (r.measured_force > best->measured_force) best = &r;
  }
  return *best;
}

void target_arithmetic(Verdict& v) {
  const auto none = trials::compute_targets(10.5);
  const auto with = trials::compute_targets(15.3);
  const double expected_none[] = {2.1, 5.3, 8.4};
  const double expected_with[] = {3.1, 7.7, 12.2};
  for (int i = 0; i < 3; ++i) {
    v.check(none[i].display == expected_none[i], "no-device " + fmt(none[i].display, 1));
    v.check(with[i].display == expected_with[i], "with-device " + fmt(with[i].display, 1));
  }
  v.detail << " 10.5 -> " << fmt(none[0].display, 1) << "/" << fmt(none[1].display, 1) << "/"
           << fmt(none[2].display, 1) << ", 15.3 -> " << fmt(with[0].display, 1) << "/"
           << fmt(with[1].display, 1) << "/" << fmt(with[2].display, 1);
}

void calibration_anchors(Verdict& v) {
  const participant::ParticipantModel model;
  const trials::ProtocolConfig protocol;
  const plant::CalibrationAnchors anchors;
  for (const auto& [mode, anchor_force] :
       {std::pair{control::ControlMode{control::Passive{}}, anchors.no_device_force},
        std::pair{control::ControlMode{control::Twa{}}, anchors.with_device_force}}) {
    const auto start = std::chrono::steady_clock::now();
    const auto result = trials::run_max_force(sim_with(mode), model, protocol);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto name = std::string(control::mode_name(mode));
    const auto& trace = result.traces.front();
    const auto& peak = peak_row(trace);
    // The plateau the trial ends on is where the peak force is held.
    const auto& plateau = trace.back();
    v.check(std::abs(result.highest_max - anchor_force) <= 0.14 + 1e-9, name + " peak");
    v.check(plateau.measured_force == result.highest_max, name + " plateau below peak");
    if (std::holds_alternative<control::Passive>(mode)) {
      v.check(std::abs(plateau.wrist_angle - anchors.no_device_angle) < 1e-9, "passive wrist");
    } else {
      v.check(plateau.wrist_angle <= anchors.with_device_angle + 1e-9, "twa wrist");
    }
    v.check(peak.t < 5.0, name + " time to peak");
    v.check(wall < 5.0, name + " wall time");
    v.detail << " " << name << " " << fmt(result.highest_max) << " N held at " << fmt(plateau.wrist_angle, 1)
             << " deg, first reached at t=" << fmt(peak.t) << " s;";
  }
}

void direction_of_assistance(Verdict& v) {
  const auto twa = trials::run_max_force(sim_with(control::Twa{}), {}, {});
  const auto passive = trials::run_max_force(sim_with(control::Passive{}), {}, {});
  const double ratio = twa.average_max / passive.average_max;
  v.check(ratio >= 1.3, "ratio");
  v.detail << " TWA avg " << fmt(twa.average_max) << " N vs Passive avg " << fmt(passive.average_max)
           << " N (+" << fmt(100.0 * (ratio - 1.0), 1) << "%)";
}

void twa_hold(Verdict& v) {
  const auto cfg = sim_with(control::Twa{});
  const double target = 7.7;
  // Close long enough for the device alone to reach the target, then relax.
  const double excursion = cfg.plant.contact.contact_excursion + target / cfg.plant.contact.device_stiffness;
  const double t1 = excursion / cfg.motor.speed;
  const double hold_seconds = 30.0;
  const trials::TargetSpec spec{50, target, target, 1.0, 3.0, t1 + hold_seconds + 1.0};
  const auto out = trials::run_scripted_trial(
      spec, cfg, [&](double t) { return t < t1 ? 20.0 : 0.0; }, false);
  const auto first = static_cast<std::size_t>(std::ceil(t1 * cfg.tick_rate));
  const auto last = first + static_cast<std::size_t>(hold_seconds * cfg.tick_rate);
  v.check(out.trace.size() > last, "trace length");
  if (out.trace.size() <= last) return;
  const double hold = out.trace[first].measured_force;
  bool within = true;
  bool neutral = true;
  for (std::size_t k = first; k <= last; ++k) {
    within = within && std::abs(out.trace[k].measured_force - hold) <= 0.28 + 1e-9;
    neutral = neutral && out.trace[k].region == control::Region::Neutral && out.trace[k].wrist_angle == 0.0;
  }
  v.check(std::abs(hold - target) <= 1.0, "hold near target");
  v.check(within, "force drift");
  v.check(neutral, "wrist neutral");
  v.detail << " closed for " << fmt(t1, 3) << " s, hold " << fmt(hold) << " N for "
           << fmt(hold_seconds, 0) << " s at wrist 0 deg";
}

/// Lowest wrist angle at which PWA steady state reaches `force`.
double pwa_inverse_angle(const SimulationConfig& cfg, double force) {
  const auto& map = std::get<control::Pwa>(cfg.mode);
  auto steady = [&](double a) {
    control::MotorState m = cfg.motor;
    m.position = control::pwa_setpoint(a, map, m);
    return plant::plant_step(m, a, cfg.plant).true_force;
  };
  double lo = 0.0;
  double hi = 40.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (steady(mid) < force ? lo : hi) = mid;
  }
  return hi;
}

void pwa_contrast(Verdict& v) {
  const auto target = trials::compute_targets(15.3)[1];
  const auto pwa_cfg = sim_with(control::Pwa{});
  const double inverse = pwa_inverse_angle(pwa_cfg, target.absolute - target.band);
  v.check(inverse > 15.0, "inverse-map angle");

  const auto pwa = trials::run_modulation_trial(target, pwa_cfg, {});
  const auto twa = trials::run_modulation_trial(target, sim_with(control::Twa{}), {});
  v.check(pwa.success && twa.success, "both trials succeed");
  if (!pwa.success || !twa.success) return;

  const std::span<const TickLogRow> pwa_hold(pwa.trace.end() - 301, pwa.trace.end());
  const std::span<const TickLogRow> twa_settled(twa.trace.end() - 100, twa.trace.end());
  const auto pwa_e = trials::wrist_effort_metrics(pwa_hold, 15.0);
  const auto twa_e = trials::wrist_effort_metrics(twa_settled, 15.0);
  double min_angle = 1e9;
  for (const auto& r : pwa_hold) min_angle = std::min(min_angle, r.wrist_angle);
  v.check(pwa_e.extension_fraction == 1.0, "PWA fraction");
  v.check(twa_e.extension_fraction == 0.0, "TWA fraction");
  v.check(min_angle >= inverse - 1e-9, "PWA hold below inverse angle");
  v.detail << " target " << fmt(target.absolute) << " N: PWA hold mean " << fmt(pwa_e.mean_abs_angle, 1)
           << " deg (min " << fmt(min_angle, 1) << ", inverse map " << fmt(inverse, 1)
           << "), fraction " << fmt(pwa_e.extension_fraction, 1) << " vs TWA "
           << fmt(twa_e.extension_fraction, 1) << " (mean " << fmt(twa_e.mean_abs_angle, 1) << " deg)";
}

int rescan_failures(const std::vector<trials::TargetOutcomes>& battery, double rate) {
  int bad = 0;
  for (const auto& t : battery) {
    for (const auto& o : t.outcomes) {
      std::vector<bool> flags;
      for (const auto& r : o.trace) flags.push_back(std::abs(r.measured_force - t.target.absolute) <= t.target.band + 1e-9);
      const auto first = oracle::first_hold_window(flags, static_cast<std::size_t>(t.target.hold * rate));
      if (o.success != first.has_value()) ++bad;
      else if (first && std::abs(*o.modulation_time - *first / rate) > 1e-12) ++bad;
    }
  }
  return bad;
}

void modulation_battery(Verdict& v) {
  const trials::ProtocolConfig protocol;
  const participant::ParticipantModel model;
  for (const auto& mode : {control::ControlMode{control::Twa{}}, control::ControlMode{control::Passive{}}}) {
    const auto cfg = sim_with(mode);
    const double highest = trials::run_max_force(cfg, model, protocol).highest_max;
    const auto battery = trials::run_modulation_battery(cfg, model, protocol, highest);
    int successes = 0;
    for (const auto& t : battery) successes += t.successes;
    const bool twa = std::holds_alternative<control::Twa>(mode);
    v.check(twa ? successes >= 8 : successes == 9, std::string(control::mode_name(mode)) + " successes");
    const int bad = rescan_failures(battery, cfg.tick_rate);
    v.check(bad == 0, "re-scan");
    v.detail << " " << control::mode_name(mode) << " " << successes << "/9 (";
    for (const auto& t : battery) {
      v.detail << t.target.percent << "%:" << t.successes << "/3"
               << (t.average_time ? " " + fmt(*t.average_time) + "s" : "") << (t.target.percent == 80 ? "" : ", ");
    }
    v.detail << ");";
  }
}

void bwa_limitation(Verdict& v) {
  const auto cfg = sim_with(control::Bwa{});
  const double highest = trials::run_max_force(cfg, {}, {}).highest_max;
  const auto battery = trials::run_modulation_battery(cfg, {}, {}, highest);
  for (int i = 0; i < 2; ++i) {
    const auto& t = battery[static_cast<std::size_t>(i)];
    v.check(t.successes == 0, std::to_string(t.target.percent) + "% succeeded");
    for (const auto& o : t.outcomes) {
      const double settled = o.trace.back().measured_force;
      v.check(!t.target.in_band(settled), "settled in band");
    }
    v.detail << " " << t.target.percent << "% (" << fmt(t.target.absolute) << " N): " << t.successes
             << "/3, final " << fmt(t.outcomes.front().trace.back().measured_force) << " N;";
  }
}

void safety_fuzz(Verdict& v) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> angle(-120.0, 120.0);
  const std::vector<control::ControlMode> modes{control::Twa{}, control::Bwa{}, control::Pwa{}, control::Passive{}};
  std::size_t samples = 0;
  bool clamp_ok = true;
  bool total = true;
  for (const auto& mode : modes) {
    auto cfg = sim_with(mode);
    Simulator sim(cfg);
    for (int i = 0; i < 250000; ++i) {
      const double a = angle(rng);
      sim.step(a);
      ++samples;
      const double p = sim.controller().motor.position;
      clamp_ok = clamp_ok && p >= 0.0 && p <= cfg.motor.upper_limit;
      const auto r = control::classify_region(a, cfg.thresholds);
      total = total && (r == control::Region::Open || r == control::Region::Neutral || r == control::Region::Close);
    }
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.check(samples == 1000000, "sample count");
  v.check(clamp_ok, "motor clamp");
  v.check(total, "classification");
  v.check(wall < 10.0, "runtime");
  v.detail << " " << samples << " samples in " << fmt(wall, 3) << " s";
}

void quantizer(Verdict& v) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> force(0.0, 100.0);
  double worst = 0.0;
  bool grid = true;
  for (int i = 0; i < 100000; ++i) {
    const double f = force(rng);
    const double m = plant::measure_force(f, {}).value;
    grid = grid && std::abs(m / 0.28 - std::round(m / 0.28)) < 1e-9;
    worst = std::max(worst, std::abs(m - f));
  }
  v.check(grid, "grid");
  v.check(worst <= 0.14 + 1e-12, "error bound");
  v.detail << " 100000 samples, max error " << fmt(worst, 6) << " N";
}

void determinism(Verdict& v) {
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const auto dir = oracle::scratch_dir(name);
    const std::string out = dir.string();
    const char* argv[] = {"orthosis_sim", "compare", "--seeds", "3", "--out", out.c_str()};
    std::ostringstream stdout_text;
    std::ostringstream stderr_text;
    const int code = cli::cli_main(6, argv, stdout_text, stderr_text);
    v.check(code == 0, "exit code");
    auto tree = oracle::snapshot_tree(dir);
    tree["<stdout>"] = stdout_text.str();
    trees.push_back(std::move(tree));
  }
  v.check(trees[0].size() > 1, "empty output");
  v.check(trees[0] == trees[1], "trees differ");
  v.detail << " " << trees[0].size() - 1 << " files identical across two runs";
}

void functional_battery(Verdict& v) {
  const auto objects = trials::default_objects();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    participant::ParticipantModel model;
    model.rng_seed = seed;
    const auto twa = trials::run_functional_battery(objects, sim_with(control::Twa{}), model);
    const auto passive = trials::run_functional_battery(objects, sim_with(control::Passive{}), model);
    v.check(twa.total > passive.total, "seed " + std::to_string(seed));
    v.detail << " seed " << seed << ": TWA " << twa.total << " vs Passive " << passive.total << ";";
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Criterion>> criteria{
      {"target arithmetic", target_arithmetic},
      {"calibration anchors", calibration_anchors},
      {"direction of assistance", direction_of_assistance},
      {"TWA hold without wrist exertion", twa_hold},
      {"PWA contrast", pwa_contrast},
      {"modulation battery shape", modulation_battery},
      {"BWA limitation", bwa_limitation},
      {"safety fuzz", safety_fuzz},
      {"quantizer property", quantizer},
      {"determinism of compare", determinism},
      {"functional battery direction", functional_battery},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " exception: " << e.what();
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << name << ":" << v.detail.str() << '\n';
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " acceptance criteria passed\n";
  return failures == 0 ? 0 : 1;
}
