#pragma once

#include <compare>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hrc/env_dynamics.hpp"

namespace hrc {

/// Identifies subtask j on level i of a decomposition tree.
struct TaskId {
  int level = 1;
  int index = 1;

  auto operator<=>(const TaskId&) const = default;
  std::string str() const;  // "T11"
};

using TaskSet = std::set<TaskId>;

inline constexpr TaskId kSliderTask{1, 1};
inline constexpr TaskId kPendulumTask{1, 2};
inline constexpr TaskId kBallTask{2, 1};

enum class Observable { SliderPosition, PendulumAngle, BallPosition };
enum class Channel { SliderForce, PendulumTorque };

std::string to_string(Observable o);
std::string to_string(Channel c);
Observable observable_from_string(const std::string& s);
Channel channel_from_string(const std::string& s);

double observable_value(const Observation& obs, Observable which);

/// Gain, angular scale and offset of one cosine-shaped subtask reward.
struct RewardParams {
  double alpha = 1.0;
  double beta = 1.0;
  double omega = 0.0;
};

struct TaskNode {
  TaskId id;
  Observable observable = Observable::BallPosition;
  RewardParams reward;
  std::vector<TaskId> children;   // contributing tasks, one level below
  std::vector<Channel> channels;  // action channels driving a leaf
};

class DecompositionTree {
 public:
  DecompositionTree() = default;
  explicit DecompositionTree(std::vector<TaskNode> nodes);

  const std::vector<TaskNode>& nodes() const { return nodes_; }
  const TaskNode* find(TaskId id) const;
  /// Throws ConfigError if `id` is not in the tree.
  const TaskNode& at(TaskId id) const;
  TaskNode& at(TaskId id);

 private:
  std::vector<TaskNode> nodes_;
};

/// alpha * cos(beta * x) + omega, with beta * x clamped to [-pi/2, pi/2].
double subtask_reward(double x, const RewardParams& params);

enum class Member { Robot, Human };

/// Which tasks each team member is rewarded for, and the per-task weights.
/// A task absent from the weight map has weight 1.
struct RoleAssignment {
  TaskSet robot_tasks;
  TaskSet human_tasks;
  std::map<TaskId, double> robot_weights;
  std::map<TaskId, double> human_weights;

  const TaskSet& tasks(Member m) const { return m == Member::Robot ? robot_tasks : human_tasks; }
  double weight(Member m, TaskId id) const;

  /// Violations: a leaf owned by zero or two members, or a shared leaf.
  std::vector<std::string> validate(const DecompositionTree& tree) const;
};

/// Weighted sum of subtask rewards over `active`. Every active task must
/// exist in `tree` and belong to `member` in `assignment` (ConfigError).
double total_reward(const Observation& obs, const RoleAssignment& assignment, Member member,
                    const TaskSet& active, const DecompositionTree& tree);

/// Upper bound of total_reward for one step (alpha and omega summed, weighted).
double max_step_reward(const RoleAssignment& assignment, Member member, const TaskSet& active,
                       const DecompositionTree& tree);

/// Two-level tree: the ball task fed by the slider and pendulum tasks. Each
/// beta maps its feasible range onto [0, pi/2].
DecompositionTree build_slider_pendulum_tree(const PhysicsParams& params,
                                             double angle_range = 0.7853981633974483);

std::vector<std::string> validate_tree(const DecompositionTree& tree);

void to_json(nlohmann::json& j, const TaskId& id);
void from_json(const nlohmann::json& j, TaskId& id);
void to_json(nlohmann::json& j, const RewardParams& p);
void from_json(const nlohmann::json& j, RewardParams& p);
void to_json(nlohmann::json& j, const DecompositionTree& tree);
void from_json(const nlohmann::json& j, DecompositionTree& tree);
void to_json(nlohmann::json& j, const RoleAssignment& a);
void from_json(const nlohmann::json& j, RoleAssignment& a);

/// Parses "T21" style identifiers.
TaskId parse_task_id(const std::string& s);

}  // namespace hrc
