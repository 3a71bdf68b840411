#pragma once

// Deterministic core of the bridge: owns the simulation, applies commands at
// tick boundaries and produces state frames. No I/O and no clock.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orthosis/bridge_codec.hpp"
#include "orthosis/participant.hpp"
#include "orthosis/session_io.hpp"
#include "orthosis/simulation.hpp"
#include "orthosis/trials.hpp"

namespace orthosis::bridge {

class BridgeSession {
 public:
  explicit BridgeSession(session::SessionConfig cfg)
      : cfg_(std::move(cfg)), sim_(cfg_.sim) {}

  /// Applies a command before the next tick.
  void apply(const Command& command) {
    std::visit([this](const auto& c) { handle(c); }, command);
  }

  /// Drives the wrist angle from a script instead of SetWristAngle commands.
  void set_script(participant::ScriptedTrajectory script) {
    script.validate(cfg_.sim.anatomical_limit);
    script_ = std::move(script);
  }

  /// Advances one tick. Returns a frame every `frame_divisor` ticks.
  std::optional<StateFrame> tick() {
    const double t = static_cast<double>(tick_) / cfg_.sim.tick_rate;
    if (script_) angle_ = participant::scripted_angle(*script_, t);
    sim_.step(angle_);
    if (trial_) advance_trial();
    const bool emit = tick_ % static_cast<std::size_t>(cfg_.frame_divisor) == 0;
    ++tick_;
    if (!emit) return std::nullopt;
    return frame(t);
  }

  std::size_t ticks() const noexcept { return tick_; }
  double held_angle() const noexcept { return angle_; }
  const session::SessionConfig& config() const noexcept { return cfg_; }
  TrialPhase phase() const noexcept { return phase_; }

  /// Rows of the most recent finished trial, with trial-relative time.
  const std::vector<TickLogRow>& last_trial_log() const noexcept { return last_trial_; }
  std::size_t finished_trials() const noexcept { return finished_trials_; }
  const std::vector<std::filesystem::path>& written_logs() const noexcept { return written_; }

  /// Directory for finished trial logs; empty disables writing.
  void set_log_dir(std::filesystem::path dir) { log_dir_ = std::move(dir); }

  /// Highest max force of a headless max-force run under `mode` (cached).
  double reference_max(const control::ControlMode& mode) {
    const std::string key(control::mode_name(mode));
    if (const auto it = reference_.find(key); it != reference_.end()) return it->second;
    auto cfg = cfg_.sim;
    cfg.mode = mode;
    const double value = trials::run_max_force(cfg, cfg_.participant, cfg_.protocol).highest_max;
    reference_[key] = value;
    return value;
  }

 private:
  struct ActiveTrial {
    trials::TargetSpec target;
    trials::ModulationJudge judge;
    std::vector<TickLogRow> rows;
    std::size_t k = 0;
    std::optional<std::size_t> entry;
  };

  void handle(const SetWristAngle& c) {
    kinematics::check_anatomical(c.angle, cfg_.sim.anatomical_limit);
    angle_ = c.angle;
  }

  void handle(const SetMode& c) {
    cfg_.sim.mode = control::mode_from_name(c.name);
    sim_.controller().mode = cfg_.sim.mode;
  }

  void handle(const SetThresholds& c) {
    control::RegionThresholds th{c.open, c.close};
    th.validate();
    cfg_.sim.thresholds = th;
    sim_.controller().thresholds = th;
  }

  void handle(const AbortTrial&) {
    if (trial_) finish(TrialPhase::Aborted);
  }

  void handle(const StartTrial& c) {
    if (trial_) finish(TrialPhase::Aborted);
    const double absolute = c.absolute ? *c.absolute : c.percent / 100.0 * reference_max(cfg_.sim.mode);
    trials::TargetSpec target{static_cast<int>(c.percent), absolute,
                              trials::round_half_up_tenth(absolute), cfg_.protocol.band,
                              cfg_.protocol.hold, cfg_.protocol.timeout};
    // A trial starts from a fresh plant and controller, like a headless trial.
    sim_ = Simulator(cfg_.sim);
    trial_.emplace(ActiveTrial{target, trials::ModulationJudge(target.hold, cfg_.sim.tick_rate), {}, 0, {}});
    phase_ = TrialPhase::Running;
  }

  void advance_trial() {
    auto& tr = *trial_;
    const bool in_band = tr.target.in_band(sim_.plant().measured_force);
    tr.rows.push_back(sim_.row(in_band));
    if (in_band) {
      if (!tr.entry) tr.entry = tr.k;
    } else {
      tr.entry.reset();
    }
    const bool done = tr.judge.feed(tr.k, in_band);
    ++tr.k;
    if (done) {
      finish(TrialPhase::Success);
    } else if (tr.k > trials::to_ticks(tr.target.timeout, cfg_.sim.tick_rate)) {
      finish(TrialPhase::Timeout);
    }
  }

  void finish(TrialPhase phase) {
    last_target_ = trial_->target;
    last_trial_ = std::move(trial_->rows);
    trial_.reset();
    phase_ = phase;
    ++finished_trials_;
    if (!log_dir_.empty()) {
      const auto path = log_dir_ / ("bridge_trial_" + std::to_string(finished_trials_) + ".csv");
      session::write_log(path, last_trial_);
      written_.push_back(path);
    }
  }

  StateFrame frame(double t) const {
    StateFrame f;
    f.t = t;
    f.wrist_angle = angle_;
    f.region = sim_.controller().region;
    f.thresholds = sim_.controller().thresholds;
    f.motor_position = sim_.controller().motor.position;
    f.measured_force = sim_.plant().measured_force;
    f.phase = phase_;
    if (trial_) {
      const auto& tr = *trial_;
      const bool in_band = !tr.rows.empty() && tr.rows.back().in_band;
      const double progress =
          tr.entry ? static_cast<double>(tr.k - 1 - *tr.entry) / cfg_.sim.tick_rate : 0.0;
      f.target = TargetStatus{tr.target.absolute, tr.target.band, in_band, progress};
    } else if (last_target_ && phase_ != TrialPhase::Idle) {
      const bool in_band = last_target_->in_band(f.measured_force);
      f.target = TargetStatus{last_target_->absolute, last_target_->band, in_band,
                              phase_ == TrialPhase::Success ? last_target_->hold : 0.0};
    }
    return f;
  }

  session::SessionConfig cfg_;
  Simulator sim_;
  std::optional<participant::ScriptedTrajectory> script_;
  double angle_ = 0.0;
  std::size_t tick_ = 0;
  std::optional<ActiveTrial> trial_;
  std::optional<trials::TargetSpec> last_target_;
  TrialPhase phase_ = TrialPhase::Idle;
  std::vector<TickLogRow> last_trial_;
  std::size_t finished_trials_ = 0;
  std::filesystem::path log_dir_;
  std::vector<std::filesystem::path> written_;
  std::map<std::string, double> reference_;
};

}  // namespace orthosis::bridge
