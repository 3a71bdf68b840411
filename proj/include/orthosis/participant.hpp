#pragma once

// Wrist-angle sources: scripted trajectories and a closed-loop virtual
// participant that reacts to delayed visual force feedback.
//
// The virtual participant is an intermittent bang-bang operator. Every
// correction is a fixed movement at the maximum wrist rate followed by a
// wait of one reaction delay, so the next decision sees the consequence of
// the previous one:
//   - threshold modes (TWA, BWA): a throttle excursion into the Close or Open
//     region out to the comfort limit and back to neutral;
//   - angle-mapped modes (PWA, no device): a short sub-movement.
// Inside the band the participant settles. Under threshold modes settling
// means returning into the Neutral region and holding there.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "orthosis/control.hpp"
#include "orthosis/errors.hpp"

namespace orthosis::participant {

struct Waypoint {
  double time = 0.0;
  double angle = 0.0;
};

struct ScriptedTrajectory {
  std::vector<Waypoint> waypoints;

  void validate(double anatomical_limit = 120.0) const {
    if (waypoints.empty()) throw InvalidInput("trajectory has no waypoints");
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
      if (!std::isfinite(waypoints[i].angle) || std::abs(waypoints[i].angle) > anatomical_limit) {
        throw InvalidInput("trajectory angle outside anatomical guard");
      }
      if (i > 0 && !(waypoints[i].time > waypoints[i - 1].time)) {
        throw InvalidInput("trajectory times must be strictly increasing");
      }
    }
  }
};

inline double scripted_angle(const ScriptedTrajectory& traj, double t) {
  if (traj.waypoints.empty()) throw InvalidInput("trajectory has no waypoints");
  const auto& wp = traj.waypoints;
  if (t <= wp.front().time) return wp.front().angle;
  if (t >= wp.back().time) return wp.back().angle;
  const auto upper = std::upper_bound(wp.begin(), wp.end(), t,
                                      [](double v, const Waypoint& w) { return v < w.time; });
  const auto& b = *upper;
  const auto& a = *(upper - 1);
  const double f = (t - a.time) / (b.time - a.time);
  return a.angle + f * (b.angle - a.angle);
}

struct ParticipantModel {
  double reaction_delay = 0.25;     // s
  double max_wrist_rate = 60.0;     // deg/s
  double angle_noise_sigma = 0.5;   // deg
  /// Unset: 25 deg under threshold modes, 40 deg otherwise.
  std::optional<double> comfort_max_extension;
  std::uint64_t rng_seed = 1;
  /// Length of one sub-movement under angle-mapped modes.
  double correction_duration = 0.05;  // s
  /// Settling stays this far inside the Neutral region.
  double neutral_margin = 2.0;  // deg
  /// How long a grasped object is held before release in the functional test.
  double lift_time = 0.5;  // s

  void validate() const {
    if (!(reaction_delay >= 0.0) || !std::isfinite(reaction_delay)) {
      throw InvalidInput("reaction delay must be >= 0");
    }
    if (!(max_wrist_rate > 0.0) || !std::isfinite(max_wrist_rate)) {
      throw InvalidInput("max wrist rate must be > 0");
    }
    if (!(angle_noise_sigma >= 0.0) || !std::isfinite(angle_noise_sigma)) {
      throw InvalidInput("angle noise sigma must be >= 0");
    }
    if (comfort_max_extension && !(*comfort_max_extension > 0.0)) {
      throw InvalidInput("comfort max extension must be positive");
    }
    if (!(correction_duration > 0.0)) throw InvalidInput("correction duration must be > 0");
    if (!(neutral_margin >= 0.0)) throw InvalidInput("neutral margin must be >= 0");
    if (!(lift_time >= 0.0)) throw InvalidInput("lift time must be >= 0");
  }
};

inline double comfort_extension(const ParticipantModel& model, const control::ControlMode& mode) {
  if (model.comfort_max_extension) return *model.comfort_max_extension;
  return control::uses_threshold_regions(mode) ? 25.0 : 40.0;
}

inline std::size_t ticks_for(double seconds, double tick) {
  if (seconds <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(seconds / tick - 1e-9));
}

/// Fixed-length FIFO: push(x) returns the value pushed `length` calls ago
/// (zero before the line fills). Length zero passes values straight through.
class DelayLine {
 public:
  explicit DelayLine(std::size_t length = 0) : ring_(length, 0.0) {}

  double push(double value) {
    if (ring_.empty()) return value;
    const double out = ring_[head_];
    ring_[head_] = value;
    head_ = (head_ + 1) % ring_.size();
    return out;
  }

  std::size_t length() const noexcept { return ring_.size(); }

 private:
  std::vector<double> ring_;
  std::size_t head_ = 0;
};

enum class Intent { None, Increase, Decrease, Settle };

inline std::string_view to_string(Intent i) {
  switch (i) {
    case Intent::None: return "none";
    case Intent::Increase: return "increase";
    case Intent::Decrease: return "decrease";
    case Intent::Settle: return "settle";
  }
  return "none";
}

inline Intent intent_from_string(std::string_view s) {
  if (s == "none") return Intent::None;
  if (s == "increase") return Intent::Increase;
  if (s == "decrease") return Intent::Decrease;
  if (s == "settle") return Intent::Settle;
  throw InvalidInput("unknown intent '" + std::string(s) + "'");
}

enum class Phase { Idle, SubMovement, Excursion, Return, Settle, Wait, Lift };

struct PolicyState {
  DelayLine feedback;
  Intent intent = Intent::None;
  Phase phase = Phase::Idle;
  std::size_t timer = 0;
  double commanded = 0.0;
  bool primed = false;
  std::mt19937_64 rng;
};

inline PolicyState make_policy_state(const ParticipantModel& model, double tick) {
  model.validate();
  PolicyState state;
  state.feedback = DelayLine(ticks_for(model.reaction_delay, tick));
  state.rng.seed(model.rng_seed);
  return state;
}

namespace detail {

inline double move_toward(double from, double to, double step) {
  return from + std::clamp(to - from, -step, step);
}

/// Adds seeded, 3-sigma-clipped Gaussian noise to the commanded angle, then
/// limits the change from the current angle to one tick of max rate.
inline double produce(const ParticipantModel& model, PolicyState& state, double current_angle,
                      double dt) {
  double noise = 0.0;
  if (model.angle_noise_sigma > 0.0) {
    std::normal_distribution<double> dist(0.0, model.angle_noise_sigma);
    const double bound = 3.0 * model.angle_noise_sigma;
    noise = std::clamp(dist(state.rng), -bound, bound);
  }
  const double step = model.max_wrist_rate * dt;
  return std::clamp(state.commanded + noise, current_angle - step, current_angle + step);
}

inline void prime(PolicyState& state, double current_angle) {
  if (!state.primed) {
    state.commanded = current_angle;
    state.primed = true;
  }
}

inline std::size_t wait_ticks(const PolicyState& state) { return state.feedback.length() + 1; }

struct MoveContext {
  const ParticipantModel& model;
  const control::ControlMode& mode;
  const control::RegionThresholds& thresholds;
  double dt;

  double step() const { return model.max_wrist_rate * dt; }
  double comfort() const { return comfort_extension(model, mode); }
  double settle_goal(double angle) const {
    return std::clamp(angle, thresholds.open_threshold + model.neutral_margin,
                      thresholds.close_threshold - model.neutral_margin);
  }
};

inline void start_correction(PolicyState& state, Intent intent, const MoveContext& ctx) {
  state.intent = intent;
  if (control::uses_threshold_regions(ctx.mode)) {
    state.phase = Phase::Excursion;
  } else {
    state.phase = Phase::SubMovement;
    state.timer = ticks_for(ctx.model.correction_duration, ctx.dt);
  }
}

inline void advance_motion(PolicyState& state, const MoveContext& ctx) {
  const double dir = state.intent == Intent::Decrease ? -1.0 : 1.0;
  switch (state.phase) {
    case Phase::SubMovement:
      state.commanded =
          std::clamp(state.commanded + dir * ctx.step(), -ctx.comfort(), ctx.comfort());
      if (state.timer > 0) --state.timer;
      if (state.timer == 0) {
        state.phase = Phase::Wait;
        state.timer = wait_ticks(state);
      }
      break;
    case Phase::Excursion: {
      const double goal = dir * ctx.comfort();
      state.commanded = move_toward(state.commanded, goal, ctx.step());
      if (state.commanded == goal) state.phase = Phase::Return;
      break;
    }
    case Phase::Return:
      state.commanded = move_toward(state.commanded, 0.0, ctx.step());
      if (state.commanded == 0.0) {
        state.phase = Phase::Wait;
        state.timer = wait_ticks(state);
      }
      break;
    case Phase::Settle:
      if (control::uses_threshold_regions(ctx.mode)) {
        const double goal = ctx.settle_goal(state.commanded);
        state.commanded = move_toward(state.commanded, goal, ctx.step());
        if (state.commanded != goal) break;
      }
      state.phase = Phase::Wait;
      state.timer = wait_ticks(state);
      break;
    case Phase::Wait:
      if (state.timer > 0) --state.timer;
      if (state.timer == 0) state.phase = Phase::Idle;
      break;
    case Phase::Idle:
    case Phase::Lift:
      break;
  }
}

}  // namespace detail

/// One tick of the force-matching task. `delayed_force` is the reading the
/// participant currently perceives (see DelayLine); returns the next angle.
inline double modulation_policy(const ParticipantModel& model, PolicyState& state,
                                double delayed_force, double target, double band,
                                const control::ControlMode& mode,
                                const control::RegionThresholds& thresholds,
                                double current_angle, double dt) {
  if (!(band > 0.0)) throw InvalidInput("band must be positive");
  detail::prime(state, current_angle);
  const detail::MoveContext ctx{model, mode, thresholds, dt};

  const bool below = delayed_force < target - band;
  const bool above = delayed_force > target + band;
  const bool in_band = !below && !above;
  const bool moving = state.phase == Phase::SubMovement || state.phase == Phase::Excursion ||
                      state.phase == Phase::Return;

  if (moving && in_band) {
    state.phase = Phase::Settle;
    state.intent = Intent::Settle;
  }
  if (state.phase == Phase::Idle) {
    if (below) {
      detail::start_correction(state, Intent::Increase, ctx);
    } else if (above) {
      detail::start_correction(state, Intent::Decrease, ctx);
    } else {
      state.intent = Intent::Settle;
      if (control::uses_threshold_regions(mode)) {
        state.commanded = detail::move_toward(state.commanded,
                                              ctx.settle_goal(state.commanded), ctx.step());
      }
    }
  }
  detail::advance_motion(state, ctx);
  return detail::produce(model, state, current_angle, dt);
}

/// Squeeze as hard as comfortable: ramp at max rate to the comfort extension
/// and hold. Deterministic (no noise).
inline double max_force_policy(const ParticipantModel& model, const control::ControlMode& mode,
                               double t) {
  if (t < 0.0) throw InvalidInput("time must be >= 0");
  return std::min(model.max_wrist_rate * t, comfort_extension(model, mode));
}

/// One tick of a grasp-lift-release cycle for the functional test: extend
/// until the perceived force reaches `required_force`, hold for the lift
/// time, then flex until the perceived force drops below `release_force` and
/// return to neutral. Under threshold modes each stage first tries the
/// Neutral region (tenodesis only) and enters the active region only if that
/// was not enough after one reaction delay.
inline double grasp_release_policy(const ParticipantModel& model, PolicyState& state,
                                   double delayed_force, double required_force,
                                   double release_force, const control::ControlMode& mode,
                                   const control::RegionThresholds& thresholds,
                                   double current_angle, double dt) {
  detail::prime(state, current_angle);
  const double step = model.max_wrist_rate * dt;
  const double comfort = comfort_extension(model, mode);
  const bool staged = control::uses_threshold_regions(mode);
  const Phase first_stage = staged ? Phase::SubMovement : Phase::Excursion;

  if (state.intent == Intent::None && state.phase != Phase::Return) {
    state.intent = Intent::Increase;
    state.phase = first_stage;
  }
  if (state.intent == Intent::Increase && delayed_force >= required_force) {
    state.intent = Intent::Settle;
    state.phase = Phase::Lift;
    state.timer = ticks_for(model.lift_time, dt);
  } else if (state.intent == Intent::Decrease && delayed_force < release_force) {
    state.intent = Intent::None;
    state.phase = Phase::Return;
  }

  const double dir = state.intent == Intent::Decrease ? -1.0 : 1.0;
  const double neutral_goal = dir > 0.0 ? thresholds.close_threshold - model.neutral_margin
                                        : thresholds.open_threshold + model.neutral_margin;
  switch (state.phase) {
    case Phase::SubMovement:  // within the Neutral region
      state.commanded = detail::move_toward(state.commanded, neutral_goal, step);
      if (state.commanded == neutral_goal) {
        state.phase = Phase::Wait;
        state.timer = detail::wait_ticks(state);
      }
      break;
    case Phase::Wait:
      if (state.timer > 0) --state.timer;
      if (state.timer == 0) state.phase = Phase::Excursion;
      break;
    case Phase::Excursion:
      state.commanded = detail::move_toward(state.commanded, dir * comfort, step);
      break;
    case Phase::Lift:
      if (state.timer > 0) --state.timer;
      if (state.timer == 0) {
        state.intent = Intent::Decrease;
        state.phase = first_stage;
      }
      break;
    case Phase::Return:
      state.commanded = detail::move_toward(state.commanded, 0.0, step);
      if (state.commanded == 0.0) state.phase = Phase::Idle;
      break;
    default:
      break;
  }
  return detail::produce(model, state, current_angle, dt);
}

}  // namespace orthosis::participant
