#pragma once

// Experimental protocols: maximum force, force modulation, and a
// grasp-and-release functional battery, plus the metrics computed on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orthosis/errors.hpp"
#include "orthosis/participant.hpp"
#include "orthosis/simulation.hpp"

namespace orthosis::trials {

struct FunctionalObject {
  std::string name;
  double required_force = 1.0;     // N
  double required_aperture = 0.0;  // motor excursion
  double weight_g = 0.0;

  void validate() const {
    if (!(required_force > 0.0)) throw InvalidInput("object '" + name + "' needs required_force > 0");
    if (!(required_aperture >= 0.0 && required_aperture <= 1.0)) {
      throw InvalidInput("object '" + name + "' required_aperture must lie in [0, 1]");
    }
  }
};

/// Six objects ordered by weight. The last two need more force than
/// tenodesis alone can produce with the default calibration.
inline std::vector<FunctionalObject> default_objects() {
  return {
      {"light_block", 1.0, 0.0, 10.0},      {"peg", 1.5, 0.0, 25.0},
      {"small_cylinder", 2.0, 0.0, 60.0},   {"medium_block", 4.0, 0.0, 120.0},
      {"heavy_cylinder", 12.0, 0.0, 300.0}, {"heavy_block", 14.0, 0.0, 450.0},
  };
}

struct ProtocolConfig {
  int max_force_trials = 3;
  double max_force_timeout = 30.0;   // s
  double plateau_rate = 0.05;        // N/s
  double plateau_window = 2.0;       // s
  int repeats = 3;
  double band = 1.0;                 // N
  double hold = 3.0;                 // s
  double timeout = 30.0;             // s
  double grt_window = 30.0;          // s per object
  std::vector<FunctionalObject> objects = default_objects();

  void validate() const {
    if (max_force_trials < 1) throw InvalidInput("max_force_trials must be >= 1");
    if (repeats < 1) throw InvalidInput("repeats must be >= 1");
    if (!(band > 0.0)) throw InvalidInput("band must be positive");
    if (!(hold > 0.0)) throw InvalidInput("hold must be positive");
    if (!(timeout > 0.0)) throw InvalidInput("timeout must be positive");
    if (!(max_force_timeout > 0.0)) throw InvalidInput("max_force_timeout must be positive");
    if (!(plateau_rate > 0.0) || !(plateau_window > 0.0)) {
      throw InvalidInput("plateau rate and window must be positive");
    }
    if (!(grt_window > 0.0)) throw InvalidInput("grt_window must be positive");
    for (const auto& o : objects) o.validate();
  }
};

inline std::size_t to_ticks(double seconds, double tick_rate) {
  return static_cast<std::size_t>(std::llround(seconds * tick_rate));
}

// ---------------------------------------------------------------------------
// Maximum force

struct MaxForceResult {
  std::vector<double> peaks;
  double average_max = 0.0;
  double highest_max = 0.0;
  std::vector<std::vector<TickLogRow>> traces;
};

inline MaxForceResult summarize_peaks(std::vector<double> peaks) {
  if (peaks.empty()) throw InvalidInput("no max-force trials");
  MaxForceResult r;
  r.highest_max = *std::max_element(peaks.begin(), peaks.end());
  r.average_max = std::accumulate(peaks.begin(), peaks.end(), 0.0) / static_cast<double>(peaks.size());
  r.peaks = std::move(peaks);
  return r;
}

/// Ends when the measured force varied by less than rate * window over the
/// trailing window, or at the timeout.
inline std::vector<TickLogRow> run_max_force_trial(const SimulationConfig& sim_cfg,
                                                   const participant::ParticipantModel& model,
                                                   const ProtocolConfig& protocol) {
  Simulator sim(sim_cfg);
  const std::size_t window = to_ticks(protocol.plateau_window, sim_cfg.tick_rate);
  const std::size_t last = to_ticks(protocol.max_force_timeout, sim_cfg.tick_rate);
  const double tolerance = protocol.plateau_rate * protocol.plateau_window;
  std::vector<TickLogRow> trace;
  for (std::size_t k = 0; k <= last; ++k) {
    const double angle = participant::max_force_policy(model, sim_cfg.mode, sim.time());
    sim.step(angle);
    trace.push_back(sim.row(false, participant::Intent::Increase));
    if (trace.size() > window) {
      const auto begin = trace.end() - static_cast<std::ptrdiff_t>(window + 1);
      const auto [lo, hi] = std::minmax_element(
          begin, trace.end(),
          [](const TickLogRow& a, const TickLogRow& b) { return a.measured_force < b.measured_force; });
      if (hi->measured_force - lo->measured_force < tolerance) break;
    }
  }
  return trace;
}

inline MaxForceResult run_max_force(const SimulationConfig& sim_cfg,
                                    const participant::ParticipantModel& model,
                                    const ProtocolConfig& protocol) {
  if (!sim_cfg.plant.calibrated) {
    throw ConfigError("plant", "plant parameters are not calibrated");
  }
  protocol.validate();
  std::vector<double> peaks;
  std::vector<std::vector<TickLogRow>> traces;
  for (int i = 0; i < protocol.max_force_trials; ++i) {
    auto trace = run_max_force_trial(sim_cfg, model, protocol);
    double peak = 0.0;
    for (const auto& row : trace) peak = std::max(peak, row.measured_force);
    peaks.push_back(peak);
    traces.push_back(std::move(trace));
  }
  auto result = summarize_peaks(std::move(peaks));
  result.traces = std::move(traces);
  return result;
}

// ---------------------------------------------------------------------------
// Force modulation

struct TargetSpec {
  int percent = 50;
  double absolute = 0.0;  // N, full precision
  double display = 0.0;   // N, rounded half-up to 0.1
  double band = 1.0;
  double hold = 3.0;
  double timeout = 30.0;

  bool in_band(double measured) const {
    // The slack absorbs representation error of the 0.28 N grid.
    return std::abs(measured - absolute) <= band + 1e-9;
  }
};

/// Rounds half-up to one decimal after stripping binary representation noise.
inline double round_half_up_tenth(double value) {
  const double scaled = std::round(value * 10.0 * 1e6) / 1e6;
  return std::floor(scaled + 0.5) / 10.0;
}

inline constexpr std::array<int, 3> kTargetPercents{20, 50, 80};

inline std::array<TargetSpec, 3> compute_targets(double highest_max, double band = 1.0,
                                                 double hold = 3.0, double timeout = 30.0) {
  if (!(highest_max > 0.0)) throw InvalidInput("highest max force must be positive");
  std::array<TargetSpec, 3> out{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int pct = kTargetPercents[i];
    const double absolute = pct / 100.0 * highest_max;
    out[i] = {pct, absolute, round_half_up_tenth(absolute), band, hold, timeout};
  }
  return out;
}

/// Online success detector: a contiguous in-band stretch lasting `hold`.
class ModulationJudge {
 public:
  ModulationJudge(double hold, double tick_rate)
      : hold_ticks_(to_ticks(hold, tick_rate)), tick_rate_(tick_rate) {}

  /// Feed tick `k`; returns true once the hold has completed.
  bool feed(std::size_t k, bool in_band) {
    if (done_) return true;
    if (!in_band) {
      inside_ = false;
      return false;
    }
    if (!inside_) {
      inside_ = true;
      entry_ = k;
    }
    if (k - entry_ >= hold_ticks_) done_ = true;
    return done_;
  }

  bool success() const noexcept { return done_; }
  std::optional<double> modulation_time() const {
    if (!done_) return std::nullopt;
    return static_cast<double>(entry_) / tick_rate_;
  }

 private:
  std::size_t hold_ticks_;
  double tick_rate_;
  std::size_t entry_ = 0;
  bool inside_ = false;
  bool done_ = false;
};

struct ModulationOutcome {
  bool success = false;
  /// Band-entry time of the successful hold window; present iff success.
  std::optional<double> modulation_time;
  std::vector<TickLogRow> trace;
};

/// Judges an already recorded trace (rows at consecutive ticks from t = 0).
inline ModulationOutcome judge_trace(std::vector<TickLogRow> trace, const TargetSpec& target,
                                     double tick_rate) {
  ModulationJudge judge(target.hold, tick_rate);
  const std::size_t last = to_ticks(target.timeout, tick_rate);
  ModulationOutcome out;
  for (std::size_t k = 0; k < trace.size() && k <= last; ++k) {
    trace[k].in_band = target.in_band(trace[k].measured_force);
    if (judge.feed(k, trace[k].in_band)) {
      trace.resize(k + 1);
      break;
    }
  }
  out.success = judge.success();
  out.modulation_time = judge.modulation_time();
  out.trace = std::move(trace);
  return out;
}

using AngleSource = std::function<double(double t)>;

/// Modulation trial driven by an open-loop wrist angle source.
inline ModulationOutcome run_scripted_trial(const TargetSpec& target, const SimulationConfig& sim_cfg,
                                            const AngleSource& source, bool stop_on_success = true) {
  Simulator sim(sim_cfg);
  ModulationJudge judge(target.hold, sim_cfg.tick_rate);
  const std::size_t last = to_ticks(target.timeout, sim_cfg.tick_rate);
  ModulationOutcome out;
  for (std::size_t k = 0; k <= last; ++k) {
    sim.step(source(sim.time()));
    const bool in_band = target.in_band(sim.plant().measured_force);
    out.trace.push_back(sim.row(in_band));
    if (judge.feed(k, in_band) && stop_on_success) break;
  }
  out.success = judge.success();
  out.modulation_time = judge.modulation_time();
  return out;
}

inline ModulationOutcome run_modulation_trial(const TargetSpec& target, const SimulationConfig& sim_cfg,
                                              const participant::ParticipantModel& model) {
  if (!sim_cfg.plant.calibrated) {
    throw ConfigError("plant", "plant parameters are not calibrated");
  }
  Simulator sim(sim_cfg);
  auto policy = participant::make_policy_state(model, sim_cfg.tick());
  ModulationJudge judge(target.hold, sim_cfg.tick_rate);
  const std::size_t last = to_ticks(target.timeout, sim_cfg.tick_rate);
  ModulationOutcome out;
  double angle = 0.0;
  for (std::size_t k = 0; k <= last; ++k) {
    sim.step(angle);
    const double measured = sim.plant().measured_force;
    const bool in_band = target.in_band(measured);
    out.trace.push_back(sim.row(in_band, policy.intent));
    if (judge.feed(k, in_band)) break;
    const double delayed = policy.feedback.push(measured);
    angle = participant::modulation_policy(model, policy, delayed, target.absolute, target.band,
                                           sim_cfg.mode, sim_cfg.thresholds, angle, sim_cfg.tick());
  }
  out.success = judge.success();
  out.modulation_time = judge.modulation_time();
  return out;
}

struct TargetOutcomes {
  TargetSpec target;
  std::vector<ModulationOutcome> outcomes;
  int successes = 0;
  /// Mean over successful trials only.
  std::optional<double> average_time;
};

inline TargetOutcomes aggregate(const TargetSpec& target, std::vector<ModulationOutcome> outcomes) {
  TargetOutcomes t{target, std::move(outcomes), 0, std::nullopt};
  double sum = 0.0;
  for (const auto& o : t.outcomes) {
    if (o.success) {
      ++t.successes;
      sum += *o.modulation_time;
    }
  }
  if (t.successes > 0) t.average_time = sum / t.successes;
  return t;
}

/// Repeat r of every target uses participant seed `model.rng_seed + r`.
inline std::vector<TargetOutcomes> run_modulation_battery(const SimulationConfig& sim_cfg,
                                                          const participant::ParticipantModel& model,
                                                          const ProtocolConfig& protocol,
                                                          double highest_max) {
  protocol.validate();
  std::vector<TargetOutcomes> result;
  for (const auto& target :
       compute_targets(highest_max, protocol.band, protocol.hold, protocol.timeout)) {
    std::vector<ModulationOutcome> outcomes;
    for (int r = 0; r < protocol.repeats; ++r) {
      auto seeded = model;
      seeded.rng_seed = model.rng_seed + static_cast<std::uint64_t>(r);
      outcomes.push_back(run_modulation_trial(target, sim_cfg, seeded));
    }
    result.push_back(aggregate(target, std::move(outcomes)));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Functional battery

/// Counts grasp-release cycles: force >= required with the motor at or past
/// the required aperture, followed by force below the release level.
class GraspCycleCounter {
 public:
  GraspCycleCounter(const FunctionalObject& object, double release_force)
      : object_(object), release_force_(release_force) {}

  void feed(double measured_force, double excursion) {
    if (!grasped_) {
      grasped_ = measured_force >= object_.required_force &&
                 excursion >= object_.required_aperture;
    } else if (measured_force < release_force_) {
      grasped_ = false;
      ++successes_;
    }
  }

  int successes() const noexcept { return successes_; }

 private:
  FunctionalObject object_;
  double release_force_;
  bool grasped_ = false;
  int successes_ = 0;
};

struct ObjectScore {
  std::string name;
  int successes = 0;
  std::vector<TickLogRow> trace;
};

struct GrtScore {
  std::vector<ObjectScore> objects;
  int total = 0;
};

inline ObjectScore run_functional_object(const FunctionalObject& object, const SimulationConfig& sim_cfg,
                                         const participant::ParticipantModel& model,
                                         double window) {
  Simulator sim(sim_cfg);
  auto policy = participant::make_policy_state(model, sim_cfg.tick());
  const double release = sim_cfg.plant.object.sensor_resolution;
  GraspCycleCounter counter(object, release);
  const std::size_t last = to_ticks(window, sim_cfg.tick_rate);
  ObjectScore score{object.name, 0, {}};
  double angle = 0.0;
  for (std::size_t k = 0; k <= last; ++k) {
    sim.step(angle);
    const double measured = sim.plant().measured_force;
    counter.feed(measured, sim.controller().motor.position);
    score.trace.push_back(sim.row(false, policy.intent));
    const double delayed = policy.feedback.push(measured);
    angle = participant::grasp_release_policy(model, policy, delayed, object.required_force, release,
                                              sim_cfg.mode, sim_cfg.thresholds, angle, sim_cfg.tick());
  }
  score.successes = counter.successes();
  return score;
}

inline GrtScore run_functional_battery(std::span<const FunctionalObject> objects,
                                       const SimulationConfig& sim_cfg,
                                       const participant::ParticipantModel& model,
                                       double window = 30.0) {
  if (!sim_cfg.plant.calibrated) {
    throw ConfigError("plant", "plant parameters are not calibrated");
  }
  GrtScore score;
  for (const auto& object : objects) {
    object.validate();
    score.objects.push_back(run_functional_object(object, sim_cfg, model, window));
    score.total += score.objects.back().successes;
  }
  return score;
}

// ---------------------------------------------------------------------------
// Wrist effort

struct WristEffort {
  bool has_hold = false;
  double mean_abs_angle = 0.0;
  /// Fraction of hold samples with the wrist beyond the close threshold.
  double extension_fraction = 0.0;
  std::size_t hold_samples = 0;
};

/// Hold phase = rows flagged in_band.
inline WristEffort wrist_effort_metrics(std::span<const TickLogRow> trace, double close_threshold) {
  WristEffort e;
  std::size_t beyond = 0;
  double sum = 0.0;
  for (const auto& row : trace) {
    if (!row.in_band) continue;
    ++e.hold_samples;
    sum += std::abs(row.wrist_angle);
    if (row.wrist_angle > close_threshold) ++beyond;
  }
  if (e.hold_samples == 0) return e;
  e.has_hold = true;
  e.mean_abs_angle = sum / static_cast<double>(e.hold_samples);
  e.extension_fraction = static_cast<double>(beyond) / static_cast<double>(e.hold_samples);
  return e;
}

}  // namespace orthosis::trials
