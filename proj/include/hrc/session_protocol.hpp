#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <variant>

namespace hrc {

inline constexpr int kProtocolVersion = 1;

namespace msg {

struct Hello {
  int version = kProtocolVersion;
  std::string role;  // "server" or "operator"
  int case_id = 0;
  nlohmann::json config = nlohmann::json::object();

  bool operator==(const Hello&) const = default;
};

struct State {
  double t = 0.0;
  double slider_pos = 0.0;       // C_x
  double pendulum_angle = 0.0;   // P_z
  double ball_pos = 0.0;         // B_y
  double slider_vel = 0.0;
  double pendulum_rate = 0.0;
  double ball_vel = 0.0;
  int stage = 0;
  int episode = 0;
  int step = 0;
  double reward_r = 0.0;  // robot reward received on arriving here
  double reward_h = 0.0;  // human reward, display only
  bool validation = false;

  bool operator==(const State&) const = default;
};

struct Action {
  double axis_value = 0.0;
  std::int64_t client_step = 0;

  bool operator==(const Action&) const = default;
};

struct EpisodeBoundary {
  int stage = 0;
  int index = 0;
  double episode_reward = 0.0;
  bool valid = true;

  bool operator==(const EpisodeBoundary&) const = default;
};

struct StageChange {
  int stage = 0;

  bool operator==(const StageChange&) const = default;
};

struct Bye {
  std::string reason;

  bool operator==(const Bye&) const = default;
};

}  // namespace msg

using SessionMessage =
    std::variant<msg::Hello, msg::State, msg::Action, msg::EpisodeBoundary, msg::StageChange, msg::Bye>;

/// Tag written in the "type" field ("hello", "state", ...).
std::string message_type(const SessionMessage& m);

nlohmann::json to_json_value(const SessionMessage& m);
/// Throws FormatError on an unknown tag, a missing field or a wrong type.
SessionMessage message_from_json(const nlohmann::json& j);

/// One line of text, no trailing newline.
std::string encode(const SessionMessage& m);
/// Throws FormatError for anything that is not exactly one valid message.
SessionMessage decode(std::string_view line);

}  // namespace hrc
