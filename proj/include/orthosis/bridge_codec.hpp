#pragma once

// Wire messages of the real-time bridge: newline-delimited JSON objects, each
// carrying a `type` and a schema version `v`.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "orthosis/control.hpp"
#include "orthosis/errors.hpp"
#include "orthosis/kinematics.hpp"

namespace orthosis::bridge {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class TrialPhase { Idle, Running, Success, Timeout, Aborted };

inline std::string_view to_string(TrialPhase p) {
  switch (p) {
    case TrialPhase::Idle: return "idle";
    case TrialPhase::Running: return "running";
    case TrialPhase::Success: return "success";
    case TrialPhase::Timeout: return "timeout";
    case TrialPhase::Aborted: return "aborted";
  }
  return "idle";
}

inline TrialPhase phase_from_string(std::string_view s) {
  if (s == "idle") return TrialPhase::Idle;
  if (s == "running") return TrialPhase::Running;
  if (s == "success") return TrialPhase::Success;
  if (s == "timeout") return TrialPhase::Timeout;
  if (s == "aborted") return TrialPhase::Aborted;
  throw CodecError("phase: unknown value '" + std::string(s) + "'");
}

struct TargetStatus {
  double absolute = 0.0;
  double band = 1.0;
  bool in_band = false;
  double hold_progress = 0.0;  // s

  friend bool operator==(const TargetStatus&, const TargetStatus&) = default;
};

struct StateFrame {
  double t = 0.0;
  double wrist_angle = 0.0;
  control::Region region = control::Region::Neutral;
  control::RegionThresholds thresholds{};
  double motor_position = 0.0;
  double measured_force = 0.0;
  std::optional<TargetStatus> target;
  TrialPhase phase = TrialPhase::Idle;

  friend bool operator==(const StateFrame& a, const StateFrame& b) {
    return a.t == b.t && a.wrist_angle == b.wrist_angle && a.region == b.region &&
           a.thresholds.open_threshold == b.thresholds.open_threshold &&
           a.thresholds.close_threshold == b.thresholds.close_threshold &&
           a.motor_position == b.motor_position && a.measured_force == b.measured_force &&
           a.target == b.target && a.phase == b.phase;
  }
};

struct SetWristAngle {
  double angle = 0.0;
};
struct SetMode {
  std::string name;
};
struct StartTrial {
  std::string kind = "modulate";
  /// Percent of the reference max force; ignored when `absolute` is set.
  double percent = 50.0;
  std::optional<double> absolute;
};
struct AbortTrial {};
struct SetThresholds {
  double open = -15.0;
  double close = 15.0;
};

using Command = std::variant<SetWristAngle, SetMode, StartTrial, AbortTrial, SetThresholds>;

namespace detail {

inline const json& required(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw CodecError(std::string(key) + ": missing required field");
  return *it;
}

inline double required_number(const json& obj, const char* key) {
  const json& v = required(obj, key);
  if (!v.is_number()) throw CodecError(std::string(key) + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw CodecError(std::string(key) + ": not finite");
  return d;
}

inline std::string required_string(const json& obj, const char* key) {
  const json& v = required(obj, key);
  if (!v.is_string()) throw CodecError(std::string(key) + ": expected a string");
  return v.get<std::string>();
}

inline bool required_bool(const json& obj, const char* key) {
  const json& v = required(obj, key);
  if (!v.is_boolean()) throw CodecError(std::string(key) + ": expected a boolean");
  return v.get<bool>();
}

inline json parse_message(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CodecError(std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw CodecError("message is not a JSON object");
  const json& v = required(obj, "v");
  if (!v.is_number_integer()) throw CodecError("v: expected an integer");
  if (v.get<int>() != kSchemaVersion) {
    throw CodecError("v: unsupported schema version " + std::to_string(v.get<int>()));
  }
  return obj;
}

}  // namespace detail

inline std::string encode(const StateFrame& f) {
  json j = {{"type", "frame"},
            {"v", kSchemaVersion},
            {"t", f.t},
            {"wrist_angle", f.wrist_angle},
            {"region", control::to_string(f.region)},
            {"thresholds",
             {{"open", f.thresholds.open_threshold}, {"close", f.thresholds.close_threshold}}},
            {"motor_position", f.motor_position},
            {"measured_force", f.measured_force},
            {"target", nullptr},
            {"phase", to_string(f.phase)}};
  if (f.target) {
    j["target"] = {{"absolute", f.target->absolute},
                   {"band", f.target->band},
                   {"in_band", f.target->in_band},
                   {"hold_progress", f.target->hold_progress}};
  }
  return j.dump();
}

/// Unknown fields are ignored; missing required fields raise CodecError
/// naming the field.
inline StateFrame decode_frame(std::string_view line) {
  const json obj = detail::parse_message(line);
  if (detail::required_string(obj, "type") != "frame") throw CodecError("type: expected 'frame'");
  StateFrame f;
  f.t = detail::required_number(obj, "t");
  f.wrist_angle = detail::required_number(obj, "wrist_angle");
  try {
    f.region = control::region_from_string(detail::required_string(obj, "region"));
  } catch (const InvalidInput& e) {
    throw CodecError(std::string("region: ") + e.what());
  }
  const json& th = detail::required(obj, "thresholds");
  if (!th.is_object()) throw CodecError("thresholds: expected an object");
  f.thresholds.open_threshold = detail::required_number(th, "open");
  f.thresholds.close_threshold = detail::required_number(th, "close");
  f.motor_position = detail::required_number(obj, "motor_position");
  f.measured_force = detail::required_number(obj, "measured_force");
  if (const auto it = obj.find("target"); it != obj.end() && !it->is_null()) {
    if (!it->is_object()) throw CodecError("target: expected an object");
    f.target = TargetStatus{detail::required_number(*it, "absolute"),
                            detail::required_number(*it, "band"),
                            detail::required_bool(*it, "in_band"),
                            detail::required_number(*it, "hold_progress")};
  }
  f.phase = phase_from_string(detail::required_string(obj, "phase"));
  return f;
}

inline std::string encode(const Command& c) {
  json j;
  std::visit(
      [&](const auto& cmd) {
        using T = std::decay_t<decltype(cmd)>;
        if constexpr (std::is_same_v<T, SetWristAngle>) {
          j = {{"type", "set_wrist_angle"}, {"angle", cmd.angle}};
        } else if constexpr (std::is_same_v<T, SetMode>) {
          j = {{"type", "set_mode"}, {"mode", cmd.name}};
        } else if constexpr (std::is_same_v<T, StartTrial>) {
          j = {{"type", "start_trial"}, {"kind", cmd.kind}, {"percent", cmd.percent}};
          if (cmd.absolute) j["absolute"] = *cmd.absolute;
        } else if constexpr (std::is_same_v<T, AbortTrial>) {
          j = {{"type", "abort_trial"}};
        } else {
          j = {{"type", "set_thresholds"}, {"open", cmd.open}, {"close", cmd.close}};
        }
      },
      c);
  j["v"] = kSchemaVersion;
  return j.dump();
}

/// Decodes and validates a command with the same rules as the config loader.
inline Command decode_command(std::string_view line,
                              double anatomical_limit = kinematics::kDefaultAnatomicalLimit) {
  const json obj = detail::parse_message(line);
  const std::string type = detail::required_string(obj, "type");
  if (type == "set_wrist_angle") {
    const double angle = detail::required_number(obj, "angle");
    if (std::abs(angle) > anatomical_limit) {
      throw CodecError("angle: " + std::to_string(angle) + " deg outside anatomical guard");
    }
    return SetWristAngle{angle};
  }
  if (type == "set_mode") {
    SetMode cmd{detail::required_string(obj, "mode")};
    try {
      control::mode_from_name(cmd.name);
    } catch (const InvalidInput& e) {
      throw CodecError(std::string("mode: ") + e.what());
    }
    return cmd;
  }
  if (type == "start_trial") {
    StartTrial cmd;
    cmd.kind = detail::required_string(obj, "kind");
    if (cmd.kind != "modulate") throw CodecError("kind: unsupported trial kind '" + cmd.kind + "'");
    if (obj.contains("absolute")) {
      cmd.absolute = detail::required_number(obj, "absolute");
      if (!(*cmd.absolute > 0.0)) throw CodecError("absolute: must be positive");
    } else {
      cmd.percent = detail::required_number(obj, "percent");
      if (!(cmd.percent > 0.0 && cmd.percent <= 100.0)) {
        throw CodecError("percent: must lie in (0, 100]");
      }
    }
    return cmd;
  }
  if (type == "abort_trial") return AbortTrial{};
  if (type == "set_thresholds") {
    SetThresholds cmd{detail::required_number(obj, "open"), detail::required_number(obj, "close")};
    if (!(cmd.open < 0.0)) throw CodecError("open: must be negative");
    if (!(cmd.close > 0.0)) throw CodecError("close: must be positive");
    return cmd;
  }
  throw CodecError("type: unknown command '" + type + "'");
}

inline std::string encode_error(std::string_view message) {
  return json{{"type", "error"}, {"v", kSchemaVersion}, {"message", message}}.dump();
}

}  // namespace orthosis::bridge
