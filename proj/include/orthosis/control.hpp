#pragma once

// Wrist-angle controllers: the three-region throttle controller (TWA) and the
// binary (BWA) and proportional (PWA) baselines. All steps are pure functions
// over value types.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <variant>

#include "orthosis/errors.hpp"
#include "orthosis/kinematics.hpp"

namespace orthosis::control {

enum class Region { Open, Neutral, Close };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::Open: return "open";
    case Region::Neutral: return "neutral";
    case Region::Close: return "close";
  }
  return "neutral";
}

inline Region region_from_string(std::string_view s) {
  if (s == "open") return Region::Open;
  if (s == "neutral") return Region::Neutral;
  if (s == "close") return Region::Close;
  throw InvalidInput("unknown region '" + std::string(s) + "'");
}

struct RegionThresholds {
  double open_threshold = -15.0;
  double close_threshold = 15.0;

  void validate() const {
    if (!std::isfinite(open_threshold) || !(open_threshold < 0.0)) {
      throw InvalidInput("open threshold must be negative");
    }
    if (!std::isfinite(close_threshold) || !(close_threshold > 0.0)) {
      throw InvalidInput("close threshold must be positive");
    }
  }
};

/// Normalized tendon excursion. The lower limit is always 0.
struct MotorState {
  double position = 0.0;
  double speed = 0.25;  // excursion per second
  double upper_limit = 1.0;

  void validate() const {
    if (!(speed > 0.0) || !std::isfinite(speed)) throw InvalidInput("motor speed must be > 0");
    if (!(upper_limit > 0.0 && upper_limit <= 1.0)) {
      throw InvalidInput("motor upper limit must lie in (0, 1]");
    }
    if (!(position >= 0.0 && position <= upper_limit)) {
      throw InvalidInput("motor position outside [0, upper_limit]");
    }
  }
};

enum class Latch { Relaxed, Grasping };

struct Twa {};
struct Bwa {
  Latch latched = Latch::Relaxed;
};
struct Pwa {
  double map_min = 0.0;
  double map_max = 40.0;
};
struct Passive {};

using ControlMode = std::variant<Twa, Bwa, Pwa, Passive>;

inline std::string_view mode_name(const ControlMode& mode) {
  struct {
    std::string_view operator()(const Twa&) const { return "twa"; }
    std::string_view operator()(const Bwa&) const { return "bwa"; }
    std::string_view operator()(const Pwa&) const { return "pwa"; }
    std::string_view operator()(const Passive&) const { return "passive"; }
  } visitor;
  return std::visit(visitor, mode);
}

/// Case-insensitive mode lookup with default parameters.
inline ControlMode mode_from_name(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "twa") return Twa{};
  if (lower == "bwa") return Bwa{};
  if (lower == "pwa") return Pwa{};
  if (lower == "passive" || lower == "none") return Passive{};
  throw InvalidInput("unknown control mode '" + std::string(name) + "'");
}

/// True for modes in which the participant operates the motor through the
/// threshold regions (as opposed to an angle-to-position map or no device).
inline bool uses_threshold_regions(const ControlMode& mode) {
  return std::holds_alternative<Twa>(mode) || std::holds_alternative<Bwa>(mode);
}

inline void validate_mode(const ControlMode& mode) {
  if (const auto* pwa = std::get_if<Pwa>(&mode)) {
    if (!std::isfinite(pwa->map_min) || !std::isfinite(pwa->map_max) ||
        !(pwa->map_min < pwa->map_max)) {
      throw InvalidInput("PWA map_min must be below map_max");
    }
  }
}

/// Boundary values fall into Neutral so an ambiguous reading never actuates.
inline Region classify_region(double angle, const RegionThresholds& thresholds) {
  if (!std::isfinite(angle)) throw InvalidInput("wrist angle is not finite");
  if (angle > thresholds.close_threshold) return Region::Close;
  if (angle < thresholds.open_threshold) return Region::Open;
  return Region::Neutral;
}

inline MotorState slew_toward(MotorState motor, double setpoint, double dt) {
  const double step = motor.speed * dt;
  const double delta = std::clamp(setpoint - motor.position, -step, step);
  motor.position = std::clamp(motor.position + delta, 0.0, motor.upper_limit);
  return motor;
}

inline MotorState twa_step(Region region, MotorState motor, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  switch (region) {
    case Region::Close:
      motor.position = std::min(motor.position + motor.speed * dt, motor.upper_limit);
      break;
    case Region::Open:
      motor.position = std::max(motor.position - motor.speed * dt, 0.0);
      break;
    case Region::Neutral:
      break;
  }
  return motor;
}

struct BwaResult {
  Latch latched;
  MotorState motor;
};

inline double bwa_setpoint(Latch latched, const MotorState& motor) {
  return latched == Latch::Grasping ? motor.upper_limit : 0.0;
}

inline BwaResult bwa_step(double angle, const RegionThresholds& thresholds, Latch latched,
                          MotorState motor, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  switch (classify_region(angle, thresholds)) {
    case Region::Close: latched = Latch::Grasping; break;
    case Region::Open: latched = Latch::Relaxed; break;
    case Region::Neutral: break;
  }
  return {latched, slew_toward(motor, bwa_setpoint(latched, motor), dt)};
}

inline double pwa_setpoint(double angle, const Pwa& map, const MotorState& motor) {
  const double fraction = (angle - map.map_min) / (map.map_max - map.map_min);
  return std::clamp(fraction, 0.0, 1.0) * motor.upper_limit;
}

inline MotorState pwa_step(double angle, const Pwa& map, MotorState motor, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  validate_mode(map);
  return slew_toward(motor, pwa_setpoint(angle, map, motor), dt);
}

struct ControllerState {
  ControlMode mode = Twa{};
  RegionThresholds thresholds{};
  MotorState motor{};
  Region region = Region::Neutral;
  /// Motor target of the last step (BWA/PWA); equals the position under TWA.
  double setpoint = 0.0;
  double tick = 0.01;
};

inline ControllerState controller_step(ControllerState state, const kinematics::WristSample& wrist,
                                       double dt) {
  if (std::abs(dt - state.tick) > 1e-12) {
    throw InvalidInput("controller dt does not match the configured tick");
  }
  state.region = classify_region(wrist.angle, state.thresholds);
  if (std::holds_alternative<Twa>(state.mode)) {
    state.motor = twa_step(state.region, state.motor, dt);
    state.setpoint = state.motor.position;
  } else if (auto* bwa = std::get_if<Bwa>(&state.mode)) {
    const auto result = bwa_step(wrist.angle, state.thresholds, bwa->latched, state.motor, dt);
    bwa->latched = result.latched;
    state.motor = result.motor;
    state.setpoint = bwa_setpoint(result.latched, state.motor);
  } else if (const auto* pwa = std::get_if<Pwa>(&state.mode)) {
    state.setpoint = pwa_setpoint(wrist.angle, *pwa, state.motor);
    state.motor = pwa_step(wrist.angle, *pwa, state.motor, dt);
  } else {
    state.motor.position = 0.0;
    state.setpoint = 0.0;
  }
  return state;
}

}  // namespace orthosis::control
