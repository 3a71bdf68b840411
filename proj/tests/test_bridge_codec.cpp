#include <gtest/gtest.h>

#include <random>

#include "orthosis/bridge_codec.hpp"

using namespace orthosis;
using namespace orthosis::bridge;

namespace {

StateFrame random_frame(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_int_distribution<int> pick(0, 4);
  StateFrame f;
  f.t = std::abs(u(rng));
  f.wrist_angle = u(rng);
  f.region = static_cast<control::Region>(pick(rng) % 3);
  f.thresholds = {-std::abs(u(rng)) - 1.0, std::abs(u(rng)) + 1.0};
  f.motor_position = std::abs(u(rng)) / 100.0;
  f.measured_force = std::abs(u(rng));
  f.phase = static_cast<TrialPhase>(pick(rng));
  if (pick(rng) % 2 == 0) {
    f.target = TargetStatus{std::abs(u(rng)), 1.0, pick(rng) % 2 == 0, std::abs(u(rng)) / 30.0};
  }
  return f;
}

}  // namespace

TEST(Codec, FrameRoundTripFuzz) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto f = random_frame(rng);
    const auto line = encode(f);
    EXPECT_EQ(decode_frame(line), f) << line;
    EXPECT_EQ(encode(decode_frame(line)), line);
  }
}

TEST(Codec, FrameCarriesTypeAndVersion) {
  const auto j = nlohmann::json::parse(encode(StateFrame{}));
  EXPECT_EQ(j["type"], "frame");
  EXPECT_EQ(j["v"], kSchemaVersion);
  EXPECT_TRUE(j["target"].is_null());
  EXPECT_EQ(j["region"], "neutral");
  EXPECT_EQ(j["phase"], "idle");
}

TEST(Codec, ExtraFieldsIgnored) {
  auto j = nlohmann::json::parse(encode(StateFrame{}));
  j["colour"] = "green";
  j["thresholds"]["extra"] = 1;
  EXPECT_EQ(decode_frame(j.dump()), StateFrame{});
}

TEST(Codec, MissingFieldNamed) {
  auto j = nlohmann::json::parse(encode(StateFrame{}));
  j.erase("motor_position");
  try {
    decode_frame(j.dump());
    FAIL();
  } catch (const CodecError& e) {
    EXPECT_NE(std::string(e.what()).find("motor_position"), std::string::npos);
  }
}

TEST(Codec, VersionMismatchRejected) {
  auto j = nlohmann::json::parse(encode(StateFrame{}));
  j["v"] = 2;
  EXPECT_THROW(decode_frame(j.dump()), CodecError);
  j.erase("v");
  EXPECT_THROW(decode_frame(j.dump()), CodecError);
}

TEST(Codec, CommandRoundTrip) {
  const std::vector<Command> commands{SetWristAngle{20.0}, SetMode{"pwa"},
                                      StartTrial{"modulate", 50.0, std::nullopt},
                                      StartTrial{"modulate", 50.0, 7.7}, AbortTrial{},
                                      SetThresholds{-10.0, 12.0}};
  for (const auto& c : commands) {
    const auto line = encode(c);
    EXPECT_EQ(encode(decode_command(line)), line);
  }
  const auto st = std::get<StartTrial>(decode_command(encode(StartTrial{"modulate", 50.0, {}})));
  EXPECT_EQ(st.percent, 50.0);
}

TEST(Codec, AnatomicalGuard) {
  EXPECT_THROW(decode_command(R"({"type":"set_wrist_angle","v":1,"angle":999})"), CodecError);
  EXPECT_NO_THROW(decode_command(R"({"type":"set_wrist_angle","v":1,"angle":-60})"));
}

TEST(Codec, InvalidCommandsRejected) {
  for (const char* line : {
           "not json",
           "[1,2]",
           R"({"v":1})",
           R"({"type":"dance","v":1})",
           R"({"type":"set_mode","v":1,"mode":"turbo"})",
           R"({"type":"set_thresholds","v":1,"open":5,"close":15})",
           R"({"type":"start_trial","v":1,"kind":"modulate","percent":0})",
           R"({"type":"start_trial","v":1,"kind":"maxforce","percent":50})",
           R"({"type":"set_wrist_angle","v":1,"angle":"up"})",
       }) {
    EXPECT_THROW(decode_command(line), CodecError) << line;
  }
}

TEST(Codec, ErrorMessage) {
  const auto j = nlohmann::json::parse(encode_error("angle: too far"));
  EXPECT_EQ(j["type"], "error");
  EXPECT_EQ(j["message"], "angle: too far");
}
