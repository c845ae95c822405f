#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "hrc/env_dynamics.hpp"
#include "hrc/hierarchical_reward.hpp"
#include "hrc/mlp.hpp"

namespace hrc {

using QNetwork = Mlp<double>;

inline constexpr int kObservationSize = 4;
using Features = Eigen::Matrix<double, kObservationSize, 1>;

/// Scales for turning an Observation into network inputs (each component
/// divided by its range).
struct ObservationScale {
  double ball_pos = 0.5;
  double pendulum_angle = 0.7853981633974483;
  double slider_pos = 0.5;
  double partner_action = 1.0;

  static ObservationScale from(const PhysicsParams& params, double angle_range);
};

Features to_features(const Observation& obs, const ObservationScale& scale);

/// Discrete robot actions on one channel. Levels are normalized to [-1, 1]
/// and scaled by the channel's actuator limit.
struct ActionSet {
  Channel channel = Channel::PendulumTorque;
  std::vector<double> levels{-1.0, -0.5, 0.0, 0.5, 1.0};

  int size() const { return static_cast<int>(levels.size()); }
  /// Throws ConfigError unless levels are strictly increasing, in [-1, 1] and contain 0.
  void validate() const;
  /// Physical input for `index` with the other channel left at zero.
  ControlInput input(int index, const PhysicsParams& params) const;
};

struct Transition {
  Features obs = Features::Zero();
  int action = 0;
  double reward = 0.0;
  Features next_obs = Features::Zero();
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  /// Uniform sample without replacement; batch_size must not exceed size().
  std::vector<Transition> sample(std::size_t batch_size, std::mt19937_64& rng) const;
  void clear();

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<Transition>& contents() const { return data_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

struct EpsilonSchedule {
  double start = 0.9;
  double end = 0.05;
  double decay = 0.95;  // multiplicative, per episode

  double at(int episode) const;
};

struct AgentConfig {
  double gamma = 0.9;
  double learning_rate = 0.01;
  EpsilonSchedule epsilon;
  std::size_t batch_size = 32;
  int target_sync_period = 200;
  std::size_t replay_capacity = 10000;
  std::vector<int> hidden_sizes{64, 64};

  void validate() const;
};

double td_target(double reward, double gamma, const Eigen::Ref<const Eigen::VectorXd>& next_q);

Eigen::VectorXd forward(const QNetwork& net, const Features& features);

/// Epsilon-greedy choice; greedy ties go to the lowest index.
int select_action(const QNetwork& net, const Features& features, double epsilon,
                  std::mt19937_64& rng);

int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q);

/// Online network, frozen target network, replay and the SGD update on
/// squared TD error.
class DqnAgent {
 public:
  DqnAgent(const AgentConfig& config, int action_count, std::uint64_t seed);

  const AgentConfig& config() const { return config_; }
  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& online() { return online_; }

  int action_count() const { return online_.output_size(); }

  int select_action(const Features& features, double epsilon);
  Eigen::VectorXd q_values(const Features& features) const;

  void remember(const Transition& t) { replay_.push(t); }
  const ReplayBuffer& replay() const { return replay_; }
  void clear_replay() { replay_.clear(); }

  /// One update from a replay sample once enough transitions are stored;
  /// syncs the target every target_sync_period updates. Returns the loss.
  std::optional<double> train_step();

  /// Mean squared TD error before the step, then one SGD step.
  double train_batch(const std::vector<Transition>& batch);

  void sync_target() { target_ = online_; }

  long updates() const { return updates_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  AgentConfig config_;
  QNetwork online_;
  QNetwork target_;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  long updates_ = 0;
};

/// Squared TD loss of `net` on `batch` with targets from `target`.
double batch_loss(const QNetwork& net, const QNetwork& target, const std::vector<Transition>& batch,
                  double gamma);

/// Gradient of batch_loss with respect to the parameters of `net`.
std::vector<QNetwork::Layer> batch_gradient(const QNetwork& net, const QNetwork& target,
                                            const std::vector<Transition>& batch, double gamma);

inline constexpr int kWeightFormatVersion = 1;

void write_weights(std::ostream& out, const QNetwork& net);
QNetwork read_weights(std::istream& in);
void save_weights(const QNetwork& net, const std::filesystem::path& path);
QNetwork load_weights(const std::filesystem::path& path);

}  // namespace hrc
