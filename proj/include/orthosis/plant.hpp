#pragma once

// Motor excursion + wrist angle -> grasp force on the instrumented object.
//
// The force chain is a superposition of two contributions:
//   device force     one-sided linear spring once the fingertips meet the object
//   tenodesis force  piecewise-linear ramp in wrist extension
// The sum is then quantized by the load cell.

#include <algorithm>
#include <cmath>

#include "orthosis/control.hpp"
#include "orthosis/errors.hpp"

namespace orthosis::plant {

inline constexpr double kSensorResolution = 0.28;

struct TransmissionParams {
  double slack = 0.1;           // dead travel, excursion units
  double flexion_gain = 100.0;  // degrees per excursion unit

  void validate() const {
    if (!(slack >= 0.0 && slack < 1.0)) throw InvalidInput("slack must lie in [0, 1)");
    if (!(flexion_gain > 0.0)) throw InvalidInput("flexion gain must be positive");
  }
};

struct ContactModel {
  double contact_excursion = 0.3;
  double device_stiffness = 9.3 / 0.7;  // N per excursion unit

  void validate(const TransmissionParams& tx) const {
    if (!(contact_excursion >= tx.slack && contact_excursion <= 1.0)) {
      throw InvalidInput("contact excursion must lie in [slack, 1]");
    }
    if (!(device_stiffness > 0.0) || !std::isfinite(device_stiffness)) {
      throw InvalidInput("device stiffness must be positive");
    }
  }
};

struct TenodesisCurve {
  double onset_angle = 5.0;
  double saturation_angle = 40.0;
  double max_force = 10.5;

  void validate() const {
    if (!(onset_angle < saturation_angle)) {
      throw InvalidInput("tenodesis onset must be below saturation");
    }
    if (!(max_force >= 0.0) || !std::isfinite(max_force)) {
      throw InvalidInput("tenodesis max force must be >= 0");
    }
  }
};

struct InstrumentedObject {
  double series_stiffness = 2.0;  // N/mm
  double sensor_resolution = kSensorResolution;
  double max_range = 100.0;

  void validate() const {
    if (!(series_stiffness > 0.0)) throw InvalidInput("series stiffness must be positive");
    if (!(sensor_resolution > 0.0)) throw InvalidInput("sensor resolution must be positive");
    if (!(max_range > 0.0)) throw InvalidInput("sensor range must be positive");
  }
};

struct PlantParams {
  TransmissionParams transmission{};
  ContactModel contact{};
  TenodesisCurve tenodesis{};
  InstrumentedObject object{};
  /// Set by calibrate_plant or by an explicit, fully specified config.
  bool calibrated = false;

  void validate() const {
    transmission.validate();
    contact.validate(transmission);
    tenodesis.validate();
    object.validate();
  }
};

struct PlantState {
  double finger_flexion = 0.0;
  bool in_contact = false;
  double device_force = 0.0;
  double tenodesis_force = 0.0;
  double true_force = 0.0;
  double measured_force = 0.0;
  bool saturated = false;
  /// Compression of the object's series springs.
  double spring_compression_mm = 0.0;
};

inline void check_excursion(double excursion) {
  if (!(excursion >= 0.0 && excursion <= 1.0)) {
    throw InvalidInput("excursion must lie in [0, 1]");
  }
}

/// Free-space finger flexion in degrees.
inline double tendon_to_flexion(double excursion, const TransmissionParams& params) {
  check_excursion(excursion);
  return params.flexion_gain * std::max(0.0, excursion - params.slack);
}

inline double device_force(double excursion, const ContactModel& contact) {
  check_excursion(excursion);
  return contact.device_stiffness * std::max(0.0, excursion - contact.contact_excursion);
}

inline double tenodesis_fraction(double angle, const TenodesisCurve& curve) {
  if (angle <= curve.onset_angle) return 0.0;
  if (angle >= curve.saturation_angle) return 1.0;
  return (angle - curve.onset_angle) / (curve.saturation_angle - curve.onset_angle);
}

inline double tenodesis_force(double angle, const TenodesisCurve& curve) {
  return curve.max_force * tenodesis_fraction(angle, curve);
}

struct ForceReading {
  double value = 0.0;
  bool saturated = false;
};

/// Load-cell readout: nearest multiple of the sensor resolution, ties to even.
inline ForceReading measure_force(double true_force, const InstrumentedObject& object) {
  if (!std::isfinite(true_force) || true_force < 0.0) {
    throw InvalidInput("true force must be finite and non-negative");
  }
  const bool saturated = true_force > object.max_range;
  const double clipped = saturated ? object.max_range : true_force;
  // nearbyint honours the default FE_TONEAREST mode, i.e. ties to even.
  const double quanta = std::nearbyint(clipped / object.sensor_resolution);
  return {quanta * object.sensor_resolution, saturated};
}

inline PlantState plant_step(const control::MotorState& motor, double wrist_angle,
                             const PlantParams& params) {
  const double excursion = motor.position;
  PlantState s;
  s.finger_flexion = tendon_to_flexion(std::min(excursion, params.contact.contact_excursion),
                                       params.transmission);
  s.in_contact = excursion >= params.contact.contact_excursion;
  s.device_force = device_force(excursion, params.contact);
  s.tenodesis_force = tenodesis_force(wrist_angle, params.tenodesis);
  s.true_force = s.device_force + s.tenodesis_force;
  const auto reading = measure_force(s.true_force, params.object);
  s.measured_force = reading.value;
  s.saturated = reading.saturated;
  s.spring_compression_mm = s.true_force / params.object.series_stiffness;
  return s;
}

/// Operating points taken from the max-force protocol.
struct CalibrationAnchors {
  double no_device_force = 10.5;
  double no_device_angle = 40.0;
  double with_device_force = 15.3;
  double with_device_angle = 25.0;
  /// Motor excursion at the with-device anchor (the safety limit).
  double with_device_excursion = 1.0;
};

/// Solves tenodesis max force and device stiffness from the two anchors,
/// keeping the configured onset/saturation angles and contact excursion.
inline PlantParams calibrate_plant(const CalibrationAnchors& anchors, PlantParams base = {}) {
  if (!(anchors.no_device_force > 0.0) || !(anchors.with_device_force > 0.0)) {
    throw CalibrationError("anchor forces must be positive");
  }
  base.transmission.validate();
  base.tenodesis.max_force = 1.0;
  base.tenodesis.validate();

  const double ramp_at_no_device = tenodesis_fraction(anchors.no_device_angle, base.tenodesis);
  if (!(ramp_at_no_device > 0.0)) {
    throw CalibrationError("no-device anchor angle lies below tenodesis onset");
  }
  base.tenodesis.max_force = anchors.no_device_force / ramp_at_no_device;

  const double residual =
      anchors.with_device_force - tenodesis_force(anchors.with_device_angle, base.tenodesis);
  const double engaged = anchors.with_device_excursion - base.contact.contact_excursion;
  if (!(engaged > 0.0)) {
    throw CalibrationError("with-device excursion does not reach contact");
  }
  const double stiffness = residual / engaged;
  if (!(stiffness > 0.0)) {
    throw CalibrationError("anchors infeasible: with-device force does not exceed tenodesis at " +
                           std::to_string(anchors.with_device_angle) + " deg");
  }
  base.contact.device_stiffness = stiffness;
  base.calibrated = true;
  base.validate();
  return base;
}

}  // namespace orthosis::plant
