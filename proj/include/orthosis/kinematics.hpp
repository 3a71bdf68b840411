#pragma once

// Wrist flexion/extension from a forearm/hand orientation pair.

#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Geometry>

#include "orthosis/errors.hpp"

namespace orthosis::kinematics {

inline constexpr double kUnitTolerance = 1e-6;
inline constexpr double kDefaultAnatomicalLimit = 120.0;
inline constexpr double kDefaultSmoothingAlpha = 0.3;

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct OrientationSample {
  double timestamp = 0.0;
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Signed wrist angle in degrees. Extension is positive, flexion negative,
/// zero is the calibrated neutral.
struct WristSample {
  double timestamp = 0.0;
  double angle = 0.0;
};

struct FlexionAxisCalibration {
  /// Flexion axis expressed in the forearm frame.
  Eigen::Vector3d axis = Eigen::Vector3d::UnitY();
  double neutral_offset = 0.0;

  void validate() const {
    if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > kUnitTolerance) {
      throw InvalidInput("flexion axis must be a unit vector");
    }
    if (!std::isfinite(neutral_offset)) {
      throw InvalidInput("neutral offset must be finite");
    }
  }
};

inline void check_unit(const Eigen::Quaterniond& q, const char* what) {
  if (!q.coeffs().allFinite() || std::abs(q.norm() - 1.0) > kUnitTolerance) {
    throw InvalidInput(std::string(what) + " orientation is not a unit quaternion");
  }
}

inline double check_anatomical(double angle, double limit) {
  if (!std::isfinite(angle) || std::abs(angle) > limit) {
    throw InvalidInput("wrist angle " + std::to_string(angle) +
                       " deg outside anatomical guard of +/-" +
                       std::to_string(limit) + " deg");
  }
  return angle;
}

/// Signed rotation angle (radians, wrapped to (-pi, pi]) of the twist of `q`
/// about the unit `axis`.
inline double twist_angle(const Eigen::Quaterniond& q, const Eigen::Vector3d& axis) {
  const double projection = q.vec().dot(axis);
  double angle = 2.0 * std::atan2(projection, q.w());
  if (angle > std::numbers::pi) angle -= 2.0 * std::numbers::pi;
  if (angle <= -std::numbers::pi) angle += 2.0 * std::numbers::pi;
  return angle;
}

/// Twist of forearm^-1 * hand about the calibrated flexion axis, minus the
/// neutral offset. `tick` is the stream period used for the desync check.
inline WristSample relative_flexion_angle(const OrientationSample& forearm,
                                          const OrientationSample& hand,
                                          const FlexionAxisCalibration& calib,
                                          double tick = 0.01,
                                          double anatomical_limit = kDefaultAnatomicalLimit) {
  check_unit(forearm.orientation, "forearm");
  check_unit(hand.orientation, "hand");
  calib.validate();
  if (std::abs(forearm.timestamp - hand.timestamp) > 0.5 * tick) {
    throw StreamDesync("forearm/hand timestamps differ by more than half a tick");
  }
  const Eigen::Quaterniond relative = forearm.orientation.conjugate() * hand.orientation;
  const double angle = rad_to_deg(twist_angle(relative, calib.axis)) - calib.neutral_offset;
  return {forearm.timestamp, check_anatomical(angle, anatomical_limit)};
}

/// Shift the neutral offset by the mean angle of `window` so the same window
/// re-measured reads zero on average.
inline FlexionAxisCalibration calibrate_neutral(std::span<const WristSample> window,
                                                FlexionAxisCalibration calib) {
  if (window.empty()) throw InvalidInput("neutral calibration window is empty");
  double sum = 0.0;
  for (const auto& s : window) sum += s.angle;
  calib.neutral_offset += sum / static_cast<double>(window.size());
  return calib;
}

/// Exponential smoothing; alpha = 1 passes `raw` through unchanged.
inline WristSample smooth_angle(const WristSample& previous, const WristSample& raw,
                                double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidInput("smoothing alpha must lie in (0, 1]");
  }
  if (alpha == 1.0) return raw;
  return {raw.timestamp, alpha * raw.angle + (1.0 - alpha) * previous.angle};
}

}  // namespace orthosis::kinematics
