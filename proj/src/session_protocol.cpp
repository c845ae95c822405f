#include "hrc/session_protocol.hpp"

#include <cmath>

#include "hrc/error.hpp"

namespace hrc {

using nlohmann::json;

namespace {

template <class T>
T field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("message is missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("message field '") + key + "' has the wrong type");
  }
}

double number(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("message is missing field '") + key + "'");
  if (!it->is_number()) throw FormatError(std::string("message field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw FormatError(std::string("message field '") + key + "' is not finite");
  return v;
}

int integer(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("message is missing field '") + key + "'");
  if (!it->is_number_integer()) throw FormatError(std::string("message field '") + key + "' must be an integer");
  return it->get<int>();
}

struct Encoder {
  json operator()(const msg::Hello& m) const {
    return {{"type", "hello"}, {"version", m.version}, {"role", m.role}, {"case_id", m.case_id},
            {"config", m.config}};
  }
  json operator()(const msg::State& m) const {
    return {{"type", "state"},
            {"t", m.t},
            {"C_x", m.slider_pos},
            {"P_z", m.pendulum_angle},
            {"B_y", m.ball_pos},
            {"C_x_dot", m.slider_vel},
            {"P_z_dot", m.pendulum_rate},
            {"B_y_dot", m.ball_vel},
            {"stage", m.stage},
            {"episode", m.episode},
            {"step", m.step},
            {"reward_r", m.reward_r},
            {"reward_h", m.reward_h},
            {"validation", m.validation}};
  }
  json operator()(const msg::Action& m) const {
    return {{"type", "action"}, {"axis_value", m.axis_value}, {"client_step", m.client_step}};
  }
  json operator()(const msg::EpisodeBoundary& m) const {
    return {{"type", "episode_boundary"},
            {"stage", m.stage},
            {"index", m.index},
            {"episode_reward", m.episode_reward},
            {"valid", m.valid}};
  }
  json operator()(const msg::StageChange& m) const { return {{"type", "stage_change"}, {"stage", m.stage}}; }
  json operator()(const msg::Bye& m) const { return {{"type", "bye"}, {"reason", m.reason}}; }
};

}  // namespace

std::string message_type(const SessionMessage& m) {
  return std::visit([](const auto& v) { return Encoder{}(v).at("type").template get<std::string>(); }, m);
}

json to_json_value(const SessionMessage& m) { return std::visit(Encoder{}, m); }

SessionMessage message_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("message must be a JSON object");
  const std::string type = field<std::string>(j, "type");
  if (type == "hello") {
    msg::Hello m;
    m.version = integer(j, "version");
    m.role = field<std::string>(j, "role");
    m.case_id = j.contains("case_id") ? integer(j, "case_id") : 0;
    if (j.contains("config")) m.config = j.at("config");
    return m;
  }
  if (type == "state") {
    msg::State m;
    m.t = number(j, "t");
    m.slider_pos = number(j, "C_x");
    m.pendulum_angle = number(j, "P_z");
    m.ball_pos = number(j, "B_y");
    m.slider_vel = number(j, "C_x_dot");
    m.pendulum_rate = number(j, "P_z_dot");
    m.ball_vel = number(j, "B_y_dot");
    m.stage = integer(j, "stage");
    m.episode = integer(j, "episode");
    m.step = integer(j, "step");
    m.reward_r = number(j, "reward_r");
    m.reward_h = number(j, "reward_h");
    m.validation = j.contains("validation") && field<bool>(j, "validation");
    return m;
  }
  if (type == "action") {
    msg::Action m;
    m.axis_value = number(j, "axis_value");
    if (j.contains("client_step")) {
      if (!j.at("client_step").is_number_integer()) throw FormatError("message field 'client_step' must be an integer");
      m.client_step = j.at("client_step").get<std::int64_t>();
    }
    return m;
  }
  if (type == "episode_boundary") {
    msg::EpisodeBoundary m;
    m.stage = j.contains("stage") ? integer(j, "stage") : 0;
    m.index = integer(j, "index");
    m.episode_reward = number(j, "episode_reward");
    m.valid = !j.contains("valid") || field<bool>(j, "valid");
    return m;
  }
  if (type == "stage_change") return msg::StageChange{integer(j, "stage")};
  if (type == "bye") return msg::Bye{j.contains("reason") ? field<std::string>(j, "reason") : std::string()};
  throw FormatError("unknown message type '" + type + "'");
}

std::string encode(const SessionMessage& m) { return to_json_value(m).dump(); }

SessionMessage decode(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed message: ") + e.what());
  }
  return message_from_json(j);
}

}  // namespace hrc
