#pragma once

// Fixed-timestep closed loop: raw wrist angle -> smoothing -> controller ->
// plant. The controller sees the smoothed estimate; the tenodesis part of
// the plant responds to the true wrist angle.

#include <cmath>
#include <cstddef>

#include "orthosis/control.hpp"
#include "orthosis/errors.hpp"
#include "orthosis/kinematics.hpp"
#include "orthosis/participant.hpp"
#include "orthosis/plant.hpp"

namespace orthosis {

struct SimulationConfig {
  double tick_rate = 100.0;  // Hz
  control::ControlMode mode = control::Twa{};
  control::RegionThresholds thresholds{};
  /// Speed and upper limit; the starting position is always 0.
  control::MotorState motor{};
  plant::PlantParams plant = plant::calibrate_plant({});
  double smoothing_alpha = kinematics::kDefaultSmoothingAlpha;
  double anatomical_limit = kinematics::kDefaultAnatomicalLimit;

  double tick() const { return 1.0 / tick_rate; }

  void validate() const {
    if (!(tick_rate > 0.0) || !std::isfinite(tick_rate)) {
      throw InvalidInput("tick rate must be positive");
    }
    control::validate_mode(mode);
    thresholds.validate();
    control::MotorState m = motor;
    m.position = 0.0;
    m.validate();
    plant.validate();
    if (!(smoothing_alpha > 0.0 && smoothing_alpha <= 1.0)) {
      throw InvalidInput("smoothing alpha must lie in (0, 1]");
    }
    if (!(anatomical_limit > 0.0)) throw InvalidInput("anatomical limit must be positive");
  }
};

/// One logged simulation tick.
struct TickLogRow {
  double t = 0.0;
  double wrist_angle = 0.0;
  control::Region region = control::Region::Neutral;
  double motor_position = 0.0;
  double true_force = 0.0;
  double measured_force = 0.0;
  bool in_band = false;
  participant::Intent intent = participant::Intent::None;

  friend bool operator==(const TickLogRow&, const TickLogRow&) = default;
};

class Simulator {
 public:
  explicit Simulator(SimulationConfig config) : config_(std::move(config)) {
    config_.validate();
    controller_.mode = config_.mode;
    controller_.thresholds = config_.thresholds;
    controller_.motor = config_.motor;
    controller_.motor.position = 0.0;
    controller_.tick = config_.tick();
  }

  /// Advances one tick driven by the true wrist angle `raw_angle` (degrees).
  const plant::PlantState& step(double raw_angle) {
    kinematics::check_anatomical(raw_angle, config_.anatomical_limit);
    const double t = time();
    const kinematics::WristSample raw{t, raw_angle};
    smoothed_ = tick_ == 0 ? raw : kinematics::smooth_angle(smoothed_, raw, config_.smoothing_alpha);
    controller_ = control::controller_step(controller_, smoothed_, controller_.tick);
    plant_ = plant::plant_step(controller_.motor, raw_angle, config_.plant);
    last_angle_ = raw_angle;
    ++tick_;
    return plant_;
  }

  /// Row for the tick most recently stepped.
  TickLogRow row(bool in_band = false,
                 participant::Intent intent = participant::Intent::None) const {
    return {static_cast<double>(tick_ - 1) / config_.tick_rate,
            last_angle_,
            controller_.region,
            controller_.motor.position,
            plant_.true_force,
            plant_.measured_force,
            in_band,
            intent};
  }

  /// Time of the next tick to be stepped.
  double time() const { return static_cast<double>(tick_) / config_.tick_rate; }
  std::size_t ticks() const noexcept { return tick_; }
  const SimulationConfig& config() const noexcept { return config_; }
  const control::ControllerState& controller() const noexcept { return controller_; }
  control::ControllerState& controller() noexcept { return controller_; }
  const plant::PlantState& plant() const noexcept { return plant_; }
  const kinematics::WristSample& smoothed() const noexcept { return smoothed_; }

 private:
  SimulationConfig config_;
  control::ControllerState controller_{};
  plant::PlantState plant_{};
  kinematics::WristSample smoothed_{};
  double last_angle_ = 0.0;
  std::size_t tick_ = 0;
};

}  // namespace orthosis
