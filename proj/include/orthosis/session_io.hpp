#pragma once

// Session configuration (JSON), per-tick CSV logs and summary files.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "orthosis/control.hpp"
#include "orthosis/errors.hpp"
#include "orthosis/kinematics.hpp"
#include "orthosis/participant.hpp"
#include "orthosis/plant.hpp"
#include "orthosis/simulation.hpp"
#include "orthosis/trials.hpp"

namespace orthosis::session {

using nlohmann::json;

inline constexpr int kDefaultPort = 7420;
inline constexpr const char* kOutputEnvVar = "ORTHOSIS_SIM_OUT";

struct SessionConfig {
  SimulationConfig sim{};
  participant::ParticipantModel participant{};
  trials::ProtocolConfig protocol{};
  plant::CalibrationAnchors anchors{};
  std::string output_dir = "orthosis_out";
  int port = kDefaultPort;
  /// Bridge frames are emitted every `frame_divisor` ticks.
  int frame_divisor = 3;
};

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return value;
}

// ---------------------------------------------------------------------------
// Config loading

namespace detail {

/// Walks one JSON object, remembering which keys were read so leftovers can
/// be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "(root)" : path_, "expected an object");
  }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json* find(std::string_view key) {
    const auto it = node_.find(std::string(key));
    if (it == node_.end()) return nullptr;
    seen_.insert(std::string(key));
    return &*it;
  }

  void number(std::string_view key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }

  void optional_number(std::string_view key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }

  void integer(std::string_view key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void seed(std::string_view key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void string(std::string_view key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [key, _] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

inline control::ControlMode read_mode(const json& node) {
  if (node.is_string()) {
    try {
      return control::mode_from_name(node.get<std::string>());
    } catch (const InvalidInput& e) {
      throw ConfigError("mode", e.what());
    }
  }
  ObjectReader r(node, "mode");
  std::string name;
  r.string("name", name);
  require(!name.empty(), "mode.name", "missing");
  control::ControlMode mode;
  try {
    mode = control::mode_from_name(name);
  } catch (const InvalidInput& e) {
    throw ConfigError("mode.name", e.what());
  }
  if (auto* pwa = std::get_if<control::Pwa>(&mode)) {
    r.number("map_min", pwa->map_min);
    r.number("map_max", pwa->map_max);
    require(pwa->map_min < pwa->map_max, "mode.map_min", "must be below mode.map_max");
  }
  r.finish();
  return mode;
}

inline void read_plant(const json& node, SessionConfig& cfg) {
  ObjectReader r(node, "plant");
  auto& p = cfg.sim.plant;
  std::optional<double> stiffness;
  std::optional<double> max_force;
  if (const json* n = r.find("transmission")) {
    ObjectReader t(*n, "plant.transmission");
    t.number("slack", p.transmission.slack);
    t.number("flexion_gain", p.transmission.flexion_gain);
    t.finish();
  }
  if (const json* n = r.find("contact")) {
    ObjectReader c(*n, "plant.contact");
    c.number("contact_excursion", p.contact.contact_excursion);
    c.optional_number("device_stiffness", stiffness);
    c.finish();
  }
  if (const json* n = r.find("tenodesis")) {
    ObjectReader t(*n, "plant.tenodesis");
    t.number("onset_angle", p.tenodesis.onset_angle);
    t.number("saturation_angle", p.tenodesis.saturation_angle);
    t.optional_number("max_force", max_force);
    t.finish();
  }
  if (const json* n = r.find("object")) {
    ObjectReader o(*n, "plant.object");
    o.number("series_stiffness", p.object.series_stiffness);
    o.number("sensor_resolution", p.object.sensor_resolution);
    o.number("max_range", p.object.max_range);
    o.finish();
  }
  if (const json* n = r.find("anchors")) {
    ObjectReader a(*n, "plant.anchors");
    a.number("no_device_force", cfg.anchors.no_device_force);
    a.number("no_device_angle", cfg.anchors.no_device_angle);
    a.number("with_device_force", cfg.anchors.with_device_force);
    a.number("with_device_angle", cfg.anchors.with_device_angle);
    a.finish();
  }
  r.finish();
  require(stiffness.has_value() == max_force.has_value(), "plant",
          "give both contact.device_stiffness and tenodesis.max_force, or neither");

  require(p.transmission.slack >= 0.0 && p.transmission.slack < 1.0, "plant.transmission.slack",
          "must lie in [0, 1)");
  require(p.transmission.flexion_gain > 0.0, "plant.transmission.flexion_gain", "must be positive");
  require(p.contact.contact_excursion >= p.transmission.slack && p.contact.contact_excursion <= 1.0,
          "plant.contact.contact_excursion", "must lie in [slack, 1]");
  require(p.tenodesis.onset_angle < p.tenodesis.saturation_angle, "plant.tenodesis.onset_angle",
          "must be below saturation_angle");
  require(p.object.series_stiffness > 0.0, "plant.object.series_stiffness", "must be positive");
  require(p.object.sensor_resolution > 0.0, "plant.object.sensor_resolution", "must be positive");
  require(p.object.max_range > 0.0, "plant.object.max_range", "must be positive");

  if (stiffness) {
    require(*stiffness > 0.0, "plant.contact.device_stiffness", "must be positive");
    require(*max_force >= 0.0, "plant.tenodesis.max_force", "must be >= 0");
    p.contact.device_stiffness = *stiffness;
    p.tenodesis.max_force = *max_force;
    p.calibrated = true;
  } else {
    try {
      auto anchors = cfg.anchors;
      anchors.with_device_excursion = cfg.sim.motor.upper_limit;
      p = plant::calibrate_plant(anchors, p);
    } catch (const CalibrationError& e) {
      throw ConfigError("plant.anchors", e.what());
    }
  }
}

inline void read_participant(const json& node, participant::ParticipantModel& m) {
  ObjectReader r(node, "participant");
  r.number("reaction_delay", m.reaction_delay);
  r.number("max_wrist_rate", m.max_wrist_rate);
  r.number("angle_noise_sigma", m.angle_noise_sigma);
  r.optional_number("comfort_max_extension", m.comfort_max_extension);
  r.number("correction_duration", m.correction_duration);
  r.number("neutral_margin", m.neutral_margin);
  r.number("lift_time", m.lift_time);
  r.finish();
  require(m.reaction_delay >= 0.0, "participant.reaction_delay", "must be >= 0");
  require(m.max_wrist_rate > 0.0, "participant.max_wrist_rate", "must be positive");
  require(m.angle_noise_sigma >= 0.0, "participant.angle_noise_sigma", "must be >= 0");
  require(!m.comfort_max_extension || *m.comfort_max_extension > 0.0,
          "participant.comfort_max_extension", "must be positive");
  require(m.correction_duration > 0.0, "participant.correction_duration", "must be positive");
  require(m.neutral_margin >= 0.0, "participant.neutral_margin", "must be >= 0");
  require(m.lift_time >= 0.0, "participant.lift_time", "must be >= 0");
}

inline void read_protocol(const json& node, trials::ProtocolConfig& p) {
  ObjectReader r(node, "trials");
  r.integer("max_force_trials", p.max_force_trials);
  r.number("max_force_timeout", p.max_force_timeout);
  r.number("plateau_rate", p.plateau_rate);
  r.number("plateau_window", p.plateau_window);
  r.integer("repeats", p.repeats);
  r.number("band", p.band);
  r.number("hold", p.hold);
  r.number("timeout", p.timeout);
  r.number("grt_window", p.grt_window);
  if (const json* objects = r.find("objects")) {
    require(objects->is_array(), "trials.objects", "expected an array");
    p.objects.clear();
    for (std::size_t i = 0; i < objects->size(); ++i) {
      const std::string path = "trials.objects[" + std::to_string(i) + "]";
      ObjectReader o((*objects)[i], path);
      trials::FunctionalObject obj;
      o.string("name", obj.name);
      o.number("required_force", obj.required_force);
      o.number("required_aperture", obj.required_aperture);
      o.number("weight_g", obj.weight_g);
      o.finish();
      require(!obj.name.empty(), path + ".name", "missing");
      require(obj.required_force > 0.0, path + ".required_force", "must be positive");
      require(obj.required_aperture >= 0.0 && obj.required_aperture <= 1.0,
              path + ".required_aperture", "must lie in [0, 1]");
      p.objects.push_back(std::move(obj));
    }
  }
  r.finish();
  require(p.max_force_trials >= 1, "trials.max_force_trials", "must be >= 1");
  require(p.max_force_timeout > 0.0, "trials.max_force_timeout", "must be positive");
  require(p.plateau_rate > 0.0, "trials.plateau_rate", "must be positive");
  require(p.plateau_window > 0.0, "trials.plateau_window", "must be positive");
  require(p.repeats >= 1, "trials.repeats", "must be >= 1");
  require(p.band > 0.0, "trials.band", "must be positive");
  require(p.hold > 0.0, "trials.hold", "must be positive");
  require(p.timeout > 0.0, "trials.timeout", "must be positive");
  require(p.grt_window > 0.0, "trials.grt_window", "must be positive");
}

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace detail

/// Parses and validates a config document. Missing keys take defaults;
/// unknown keys are rejected.
inline SessionConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError("", "parse error at line " + std::to_string(line) + ", column " +
                              std::to_string(col) + ": " + e.what());
  }
  SessionConfig cfg;
  detail::ObjectReader r(root, "");
  using detail::require;

  r.number("tick_rate", cfg.sim.tick_rate);
  require(cfg.sim.tick_rate > 0.0, "tick_rate", "must be positive");

  if (const json* mode = r.find("mode")) cfg.sim.mode = detail::read_mode(*mode);

  if (const json* n = r.find("thresholds")) {
    detail::ObjectReader t(*n, "thresholds");
    t.number("open", cfg.sim.thresholds.open_threshold);
    t.number("close", cfg.sim.thresholds.close_threshold);
    t.finish();
  }
  require(cfg.sim.thresholds.open_threshold < 0.0, "thresholds.open", "must be negative");
  require(cfg.sim.thresholds.close_threshold > 0.0, "thresholds.close", "must be positive");

  if (const json* n = r.find("motor")) {
    detail::ObjectReader m(*n, "motor");
    m.number("speed", cfg.sim.motor.speed);
    m.number("upper_limit", cfg.sim.motor.upper_limit);
    m.finish();
  }
  require(cfg.sim.motor.speed > 0.0, "motor.speed", "must be positive");
  require(cfg.sim.motor.upper_limit > 0.0 && cfg.sim.motor.upper_limit <= 1.0, "motor.upper_limit",
          "must lie in (0, 1]");

  r.number("smoothing_alpha", cfg.sim.smoothing_alpha);
  require(cfg.sim.smoothing_alpha > 0.0 && cfg.sim.smoothing_alpha <= 1.0, "smoothing_alpha",
          "must lie in (0, 1]");
  r.number("anatomical_limit", cfg.sim.anatomical_limit);
  require(cfg.sim.anatomical_limit > 0.0, "anatomical_limit", "must be positive");

  // Calibration depends on the motor upper limit, so plant is read after motor.
  if (const json* n = r.find("plant")) {
    detail::read_plant(*n, cfg);
  } else {
    auto anchors = cfg.anchors;
    anchors.with_device_excursion = cfg.sim.motor.upper_limit;
    try {
      cfg.sim.plant = plant::calibrate_plant(anchors, cfg.sim.plant);
    } catch (const CalibrationError& e) {
      throw ConfigError("plant.anchors", e.what());
    }
  }
  if (const json* n = r.find("participant")) detail::read_participant(*n, cfg.participant);
  if (const json* n = r.find("trials")) detail::read_protocol(*n, cfg.protocol);

  r.seed("seed", cfg.participant.rng_seed);
  r.string("output_dir", cfg.output_dir);
  r.integer("port", cfg.port);
  require(cfg.port > 0 && cfg.port < 65536, "port", "must lie in 1..65535");
  r.integer("frame_divisor", cfg.frame_divisor);
  require(cfg.frame_divisor >= 1, "frame_divisor", "must be >= 1");
  r.finish();

  try {
    cfg.sim.validate();
    cfg.participant.validate();
    cfg.protocol.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("", e.what());
  }
  return cfg;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline SessionConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

/// Config as JSON with every field explicit (plant stored post-calibration).
inline json config_to_json(const SessionConfig& cfg) {
  json mode;
  if (const auto* pwa = std::get_if<control::Pwa>(&cfg.sim.mode)) {
    mode = {{"name", "pwa"}, {"map_min", pwa->map_min}, {"map_max", pwa->map_max}};
  } else {
    mode = std::string(control::mode_name(cfg.sim.mode));
  }
  const auto& p = cfg.sim.plant;
  json objects = json::array();
  for (const auto& o : cfg.protocol.objects) {
    objects.push_back({{"name", o.name},
                       {"required_force", o.required_force},
                       {"required_aperture", o.required_aperture},
                       {"weight_g", o.weight_g}});
  }
  json participant = {{"reaction_delay", cfg.participant.reaction_delay},
                      {"max_wrist_rate", cfg.participant.max_wrist_rate},
                      {"angle_noise_sigma", cfg.participant.angle_noise_sigma},
                      {"correction_duration", cfg.participant.correction_duration},
                      {"neutral_margin", cfg.participant.neutral_margin},
                      {"lift_time", cfg.participant.lift_time}};
  if (cfg.participant.comfort_max_extension) {
    participant["comfort_max_extension"] = *cfg.participant.comfort_max_extension;
  }
  return {
      {"tick_rate", cfg.sim.tick_rate},
      {"mode", mode},
      {"thresholds",
       {{"open", cfg.sim.thresholds.open_threshold}, {"close", cfg.sim.thresholds.close_threshold}}},
      {"motor", {{"speed", cfg.sim.motor.speed}, {"upper_limit", cfg.sim.motor.upper_limit}}},
      {"smoothing_alpha", cfg.sim.smoothing_alpha},
      {"anatomical_limit", cfg.sim.anatomical_limit},
      {"plant",
       {{"transmission",
         {{"slack", p.transmission.slack}, {"flexion_gain", p.transmission.flexion_gain}}},
        {"contact",
         {{"contact_excursion", p.contact.contact_excursion},
          {"device_stiffness", p.contact.device_stiffness}}},
        {"tenodesis",
         {{"onset_angle", p.tenodesis.onset_angle},
          {"saturation_angle", p.tenodesis.saturation_angle},
          {"max_force", p.tenodesis.max_force}}},
        {"object",
         {{"series_stiffness", p.object.series_stiffness},
          {"sensor_resolution", p.object.sensor_resolution},
          {"max_range", p.object.max_range}}},
        {"anchors",
         {{"no_device_force", cfg.anchors.no_device_force},
          {"no_device_angle", cfg.anchors.no_device_angle},
          {"with_device_force", cfg.anchors.with_device_force},
          {"with_device_angle", cfg.anchors.with_device_angle}}}}},
      {"participant", participant},
      {"trials",
       {{"max_force_trials", cfg.protocol.max_force_trials},
        {"max_force_timeout", cfg.protocol.max_force_timeout},
        {"plateau_rate", cfg.protocol.plateau_rate},
        {"plateau_window", cfg.protocol.plateau_window},
        {"repeats", cfg.protocol.repeats},
        {"band", cfg.protocol.band},
        {"hold", cfg.protocol.hold},
        {"timeout", cfg.protocol.timeout},
        {"grt_window", cfg.protocol.grt_window},
        {"objects", objects}}},
      {"seed", cfg.participant.rng_seed},
      {"output_dir", cfg.output_dir},
      {"port", cfg.port},
      {"frame_divisor", cfg.frame_divisor},
  };
}

// ---------------------------------------------------------------------------
// Tick logs

inline constexpr std::string_view kLogHeader =
    "t,wrist_angle,region,motor_position,true_force,measured_force,in_band,intent";

inline std::string format_row(const TickLogRow& row) {
  std::string line;
  line += format_number(row.t);
  line += ',';
  line += format_number(row.wrist_angle);
  line += ',';
  line += control::to_string(row.region);
  line += ',';
  line += format_number(row.motor_position);
  line += ',';
  line += format_number(row.true_force);
  line += ',';
  line += format_number(row.measured_force);
  line += ',';
  line += row.in_band ? '1' : '0';
  line += ',';
  line += participant::to_string(row.intent);
  return line;
}

inline void write_log(std::ostream& out, std::span<const TickLogRow> rows) {
  out << kLogHeader << '\n';
  for (const auto& row : rows) out << format_row(row) << '\n';
}

inline void write_log(const std::filesystem::path& path, std::span<const TickLogRow> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write log '" + path.string() + "'");
  write_log(out, rows);
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

/// Row numbers in errors count the header as row 1.
inline std::vector<TickLogRow> read_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != kLogHeader) {
    throw LogFormatError(1, "missing or unexpected header");
  }
  std::vector<TickLogRow> rows;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    const auto text = detail::trim_cr(line);
    if (text.empty()) continue;
    const auto cells = detail::split(text, ',');
    if (cells.size() != 8) throw LogFormatError(row_number, "expected 8 columns");
    auto number = [&](std::string_view cell, const char* name) {
      const auto v = parse_number(cell);
      if (!v) throw LogFormatError(row_number, std::string("bad ") + name);
      return *v;
    };
    TickLogRow row;
    row.t = number(cells[0], "t");
    row.wrist_angle = number(cells[1], "wrist_angle");
    try {
      row.region = control::region_from_string(cells[2]);
      row.intent = participant::intent_from_string(cells[7]);
    } catch (const InvalidInput& e) {
      throw LogFormatError(row_number, e.what());
    }
    row.motor_position = number(cells[3], "motor_position");
    row.true_force = number(cells[4], "true_force");
    row.measured_force = number(cells[5], "measured_force");
    if (cells[6] != "0" && cells[6] != "1") throw LogFormatError(row_number, "bad in_band");
    row.in_band = cells[6] == "1";
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<TickLogRow> read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open log '" + path.string() + "'");
  return read_log(in);
}

// ---------------------------------------------------------------------------
// Replay

/// Re-runs controller and plant on the logged wrist column. Region, motor and
/// force columns are recomputed; in_band and intent are carried over.
inline std::vector<TickLogRow> replay(const SimulationConfig& sim_cfg,
                                      std::span<const TickLogRow> source) {
  Simulator sim(sim_cfg);
  std::vector<TickLogRow> out;
  out.reserve(source.size());
  for (const auto& row : source) {
    sim.step(row.wrist_angle);
    out.push_back(sim.row(row.in_band, row.intent));
  }
  return out;
}

/// Index of the first row whose recomputed columns differ, if any.
inline std::optional<std::size_t> first_mismatch(std::span<const TickLogRow> a,
                                                 std::span<const TickLogRow> b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(a[i] == b[i])) return i;
  }
  if (a.size() != b.size()) return n;
  return std::nullopt;
}

/// Orientation replay input: t,forearm_w,forearm_x,forearm_y,forearm_z,
/// hand_w,hand_x,hand_y,hand_z.
inline constexpr std::string_view kOrientationHeader =
    "t,forearm_w,forearm_x,forearm_y,forearm_z,hand_w,hand_x,hand_y,hand_z";

struct OrientationPair {
  kinematics::OrientationSample forearm;
  kinematics::OrientationSample hand;
};

inline std::vector<OrientationPair> read_orientation_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != kOrientationHeader) {
    throw LogFormatError(1, "missing or unexpected orientation header");
  }
  std::vector<OrientationPair> out;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    const auto text = detail::trim_cr(line);
    if (text.empty()) continue;
    const auto cells = detail::split(text, ',');
    if (cells.size() != 9) throw LogFormatError(row_number, "expected 9 columns");
    double v[9];
    for (int i = 0; i < 9; ++i) {
      const auto parsed = parse_number(cells[static_cast<std::size_t>(i)]);
      if (!parsed) throw LogFormatError(row_number, "bad number");
      v[i] = *parsed;
    }
    OrientationPair pair;
    pair.forearm = {v[0], Eigen::Quaterniond(v[1], v[2], v[3], v[4])};
    pair.hand = {v[0], Eigen::Quaterniond(v[5], v[6], v[7], v[8])};
    out.push_back(pair);
  }
  return out;
}

/// Converts an orientation stream into wrist angles. The first second of
/// samples establishes the neutral offset.
inline std::vector<double> orientation_to_angles(std::span<const OrientationPair> stream,
                                                 kinematics::FlexionAxisCalibration calib,
                                                 double tick_rate, double anatomical_limit) {
  const double tick = 1.0 / tick_rate;
  std::vector<kinematics::WristSample> raw;
  raw.reserve(stream.size());
  for (const auto& p : stream) {
    raw.push_back(kinematics::relative_flexion_angle(p.forearm, p.hand, calib, tick, anatomical_limit));
  }
  const std::size_t window = std::min(raw.size(), static_cast<std::size_t>(std::llround(tick_rate)));
  calib = kinematics::calibrate_neutral(std::span(raw).first(window), calib);
  std::vector<double> angles;
  angles.reserve(stream.size());
  for (const auto& p : stream) {
    angles.push_back(
        kinematics::relative_flexion_angle(p.forearm, p.hand, calib, tick, anatomical_limit).angle);
  }
  return angles;
}

// ---------------------------------------------------------------------------
// Summaries

inline constexpr std::string_view kModulationSummaryHeader =
    "mode,average_max_force_n,highest_max_force_n,target_percent,target_force_n,"
    "average_modulation_time_s,successes,trials";

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

/// Table-I-shaped rows: one per target.
inline void write_modulation_summary(std::ostream& out, std::string_view mode,
                                     const trials::MaxForceResult& max_force,
                                     std::span<const trials::TargetOutcomes> targets,
                                     bool header = true) {
  if (header) out << kModulationSummaryHeader << '\n';
  for (const auto& t : targets) {
    out << mode << ',' << format_number(max_force.average_max) << ','
        << format_number(max_force.highest_max) << ',' << t.target.percent << ','
        << format_number(t.target.display) << ',' << format_optional(t.average_time) << ','
        << t.successes << ',' << t.outcomes.size() << '\n';
  }
}

inline constexpr std::string_view kMaxForceSummaryHeader = "mode,trial,peak_force_n";

inline void write_max_force_summary(std::ostream& out, std::string_view mode,
                                    const trials::MaxForceResult& r) {
  out << kMaxForceSummaryHeader << '\n';
  for (std::size_t i = 0; i < r.peaks.size(); ++i) {
    out << mode << ',' << i + 1 << ',' << format_number(r.peaks[i]) << '\n';
  }
  out << mode << ",average," << format_number(r.average_max) << '\n';
  out << mode << ",highest," << format_number(r.highest_max) << '\n';
}

inline constexpr std::string_view kGrtSummaryHeader = "mode,object,required_force_n,successes";

inline void write_grt_summary(std::ostream& out, std::string_view mode,
                              std::span<const trials::FunctionalObject> objects,
                              const trials::GrtScore& score, bool header = true) {
  if (header) out << kGrtSummaryHeader << '\n';
  for (std::size_t i = 0; i < score.objects.size(); ++i) {
    out << mode << ',' << score.objects[i].name << ',' << format_number(objects[i].required_force)
        << ',' << score.objects[i].successes << '\n';
  }
  out << mode << ",total,," << score.total << '\n';
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace orthosis::session
