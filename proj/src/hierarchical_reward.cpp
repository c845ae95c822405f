#include "hrc/hierarchical_reward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <nlohmann/json.hpp>

#include "hrc/error.hpp"

namespace hrc {

std::string TaskId::str() const { return "T" + std::to_string(level) + std::to_string(index); }

TaskId parse_task_id(const std::string& s) {
  // T<level><index>, single digits each, or T<level>.<index> for larger trees.
  if (s.size() >= 3 && (s[0] == 'T' || s[0] == 't')) {
    const auto dot = s.find('.');
    try {
      if (dot != std::string::npos)
        return TaskId{std::stoi(s.substr(1, dot - 1)), std::stoi(s.substr(dot + 1))};
      if (s.size() == 3 && std::isdigit(s[1]) && std::isdigit(s[2]))
        return TaskId{s[1] - '0', s[2] - '0'};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("malformed task id '" + s + "'");
}

std::string to_string(Observable o) {
  switch (o) {
    case Observable::SliderPosition: return "slider_pos";
    case Observable::PendulumAngle: return "pendulum_angle";
    case Observable::BallPosition: return "ball_pos";
  }
  return "?";
}

std::string to_string(Channel c) {
  return c == Channel::SliderForce ? "slider_force" : "pendulum_torque";
}

Observable observable_from_string(const std::string& s) {
  if (s == "slider_pos") return Observable::SliderPosition;
  if (s == "pendulum_angle") return Observable::PendulumAngle;
  if (s == "ball_pos") return Observable::BallPosition;
  throw ConfigError("unknown observable '" + s + "'");
}

Channel channel_from_string(const std::string& s) {
  if (s == "slider_force") return Channel::SliderForce;
  if (s == "pendulum_torque") return Channel::PendulumTorque;
  throw ConfigError("unknown action channel '" + s + "'");
}

double observable_value(const Observation& obs, Observable which) {
  switch (which) {
    case Observable::SliderPosition: return obs.slider_pos;
    case Observable::PendulumAngle: return obs.pendulum_angle;
    case Observable::BallPosition: return obs.ball_pos;
  }
  return 0.0;
}

DecompositionTree::DecompositionTree(std::vector<TaskNode> nodes) : nodes_(std::move(nodes)) {}

const TaskNode* DecompositionTree::find(TaskId id) const {
  auto it = std::find_if(nodes_.begin(), nodes_.end(), [&](const TaskNode& n) { return n.id == id; });
  return it == nodes_.end() ? nullptr : &*it;
}

const TaskNode& DecompositionTree::at(TaskId id) const {
  if (const TaskNode* node = find(id)) return *node;
  throw ConfigError("task " + id.str() + " is not in the decomposition tree");
}

TaskNode& DecompositionTree::at(TaskId id) {
  return const_cast<TaskNode&>(static_cast<const DecompositionTree&>(*this).at(id));
}

double subtask_reward(double x, const RewardParams& p) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  const double phase = std::clamp(p.beta * x, -half_pi, half_pi);
  return p.alpha * std::cos(phase) + p.omega;
}

double RoleAssignment::weight(Member m, TaskId id) const {
  const auto& weights = m == Member::Robot ? robot_weights : human_weights;
  auto it = weights.find(id);
  return it == weights.end() ? 1.0 : it->second;
}

std::vector<std::string> RoleAssignment::validate(const DecompositionTree& tree) const {
  std::vector<std::string> violations;
  for (const auto& node : tree.nodes()) {
    const bool robot = robot_tasks.count(node.id) > 0;
    const bool human = human_tasks.count(node.id) > 0;
    if (node.children.empty() && robot == human)
      violations.push_back("leaf " + node.id.str() +
                           (robot ? " is shared by both members" : " has no owner"));
  }
  for (const auto& set : {robot_tasks, human_tasks})
    for (const auto& id : set)
      if (!tree.find(id)) violations.push_back("assigned task " + id.str() + " is not in the tree");
  return violations;
}

namespace {

void check_active(const RoleAssignment& assignment, Member member, const TaskSet& active,
                  const DecompositionTree& tree) {
  const TaskSet& owned = assignment.tasks(member);
  for (const auto& id : active) {
    tree.at(id);
    if (!owned.count(id))
      throw ConfigError("task " + id.str() + " is not assigned to the " +
                        (member == Member::Robot ? "robot" : "human"));
  }
}

}  // namespace

double total_reward(const Observation& obs, const RoleAssignment& assignment, Member member,
                    const TaskSet& active, const DecompositionTree& tree) {
  check_active(assignment, member, active, tree);
  double sum = 0.0;
  for (const auto& id : active) {
    const TaskNode& node = tree.at(id);
    sum += assignment.weight(member, id) *
           subtask_reward(observable_value(obs, node.observable), node.reward);
  }
  return sum;
}

double max_step_reward(const RoleAssignment& assignment, Member member, const TaskSet& active,
                       const DecompositionTree& tree) {
  check_active(assignment, member, active, tree);
  double sum = 0.0;
  for (const auto& id : active) {
    const RewardParams& r = tree.at(id).reward;
    sum += assignment.weight(member, id) * (r.alpha + r.omega);
  }
  return sum;
}

DecompositionTree build_slider_pendulum_tree(const PhysicsParams& params, double angle_range) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  if (!(angle_range > 0.0)) throw ConfigError("angle_range must be > 0");
  TaskNode slider{kSliderTask, Observable::SliderPosition,
                  {1.0, half_pi / params.slider_half_range, 0.0}, {}, {Channel::SliderForce}};
  TaskNode pendulum{kPendulumTask, Observable::PendulumAngle, {1.0, half_pi / angle_range, 0.0},
                    {}, {Channel::PendulumTorque}};
  TaskNode ball{kBallTask, Observable::BallPosition,
                {1.0, half_pi / params.pendulum_half_length, 0.0}, {kSliderTask, kPendulumTask}, {}};
  return DecompositionTree({slider, pendulum, ball});
}

std::vector<std::string> validate_tree(const DecompositionTree& tree) {
  std::vector<std::string> violations;
  TaskSet seen;
  for (const auto& node : tree.nodes()) {
    if (!seen.insert(node.id).second)
      violations.push_back("rule 2: task " + node.id.str() + " appears more than once");
  }
  for (const auto& node : tree.nodes()) {
    for (const auto& child_id : node.children) {
      const TaskNode* child = tree.find(child_id);
      if (!child)
        violations.push_back("rule 1: " + node.id.str() + " has missing child " + child_id.str());
      else if (child->id.level != node.id.level - 1)
        violations.push_back("rule 1: " + node.id.str() + " has child " + child_id.str() +
                             " that is not one level below");
    }
    if (node.children.empty()) {
      if (node.channels.size() != 1)
        violations.push_back("rule 3: leaf " + node.id.str() + " is driven by " +
                             std::to_string(node.channels.size()) + " action channels");
    }
  }
  return violations;
}

void to_json(nlohmann::json& j, const TaskId& id) { j = id.str(); }
void from_json(const nlohmann::json& j, TaskId& id) { id = parse_task_id(j.get<std::string>()); }

void to_json(nlohmann::json& j, const RewardParams& p) {
  j = {{"alpha", p.alpha}, {"beta", p.beta}, {"omega", p.omega}};
}

void from_json(const nlohmann::json& j, RewardParams& p) {
  p.alpha = j.value("alpha", p.alpha);
  p.beta = j.value("beta", p.beta);
  p.omega = j.value("omega", p.omega);
  if (!(p.beta > 0.0) || !(p.alpha >= 0.0))
    throw ConfigError("reward params need beta > 0 and alpha >= 0");
}

void to_json(nlohmann::json& j, const DecompositionTree& tree) {
  j = nlohmann::json::array();
  for (const auto& n : tree.nodes()) {
    nlohmann::json node = {{"id", n.id}, {"observable", to_string(n.observable)},
                           {"reward", n.reward}, {"children", n.children}};
    nlohmann::json channels = nlohmann::json::array();
    for (auto c : n.channels) channels.push_back(to_string(c));
    node["channels"] = channels;
    j.push_back(node);
  }
}

void from_json(const nlohmann::json& j, DecompositionTree& tree) {
  std::vector<TaskNode> nodes;
  for (const auto& item : j) {
    TaskNode n;
    n.id = item.at("id").get<TaskId>();
    n.observable = observable_from_string(item.at("observable").get<std::string>());
    n.reward = item.at("reward").get<RewardParams>();
    n.children = item.value("children", std::vector<TaskId>{});
    for (const auto& c : item.value("channels", std::vector<std::string>{}))
      n.channels.push_back(channel_from_string(c));
    nodes.push_back(std::move(n));
  }
  tree = DecompositionTree(std::move(nodes));
}

namespace {

nlohmann::json weights_json(const std::map<TaskId, double>& w) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, value] : w) j[id.str()] = value;
  return j;
}

std::map<TaskId, double> weights_from(const nlohmann::json& j) {
  std::map<TaskId, double> w;
  for (const auto& [key, value] : j.items()) w[parse_task_id(key)] = value.get<double>();
  return w;
}

}  // namespace

void to_json(nlohmann::json& j, const RoleAssignment& a) {
  j = {{"robot_tasks", a.robot_tasks},
       {"human_tasks", a.human_tasks},
       {"robot_weights", weights_json(a.robot_weights)},
       {"human_weights", weights_json(a.human_weights)}};
}

void from_json(const nlohmann::json& j, RoleAssignment& a) {
  a.robot_tasks = j.value("robot_tasks", TaskSet{});
  a.human_tasks = j.value("human_tasks", TaskSet{});
  a.robot_weights = weights_from(j.value("robot_weights", nlohmann::json::object()));
  a.human_weights = weights_from(j.value("human_weights", nlohmann::json::object()));
}

}  // namespace hrc
