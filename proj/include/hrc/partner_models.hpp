#pragma once

#include <deque>
#include <map>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <random>
#include <string>
#include <vector>

#include "hrc/env_dynamics.hpp"
#include "hrc/hierarchical_reward.hpp"

namespace hrc {

enum class PartnerKind { Absent, Surrogate, Remote };

std::string to_string(PartnerKind k);

/// Standard deviations of the surrogate's perception of each position. Rates
/// are perceived with rate_factor times the matching position noise.
struct PerceptionNoise {
  double slider_pos = 0.0;      // m
  double pendulum_angle = 0.0;  // rad
  double ball_pos = 0.0;        // m
  double rate_factor = 2.0;     // 1/s
};

/// Proportional-derivative gains on the own observable plus the ball
/// correction gains used when the ball task is active. Gains act on raw SI
/// positions and rates; the output is the normalized action.
struct ControlGains {
  double kp = 2.0;
  double kd = 0.5;
  double kb = 0.0;
  double kbd = 0.0;
};

struct PartnerSpec {
  PartnerKind kind = PartnerKind::Absent;
  Channel channel = Channel::SliderForce;
  PerceptionNoise noise;
  int reaction_delay = 0;        // steps
  double gain_drift_rate = 0.0;  // relative, per episode
  double action_smoothing = 0.0;
  ControlGains gains;

  void validate() const;
};

/// A named set of human-like imperfections and per-channel gains.
struct SkillProfile {
  std::string name;
  PerceptionNoise noise;
  int reaction_delay = 0;
  double gain_drift_rate = 0.0;
  double action_smoothing = 0.0;
  ControlGains slider_gains;
  ControlGains pendulum_gains;
};

/// Shipped presets: ideal, skilled_translation, weak_rotation.
const std::map<std::string, SkillProfile>& default_profiles();
/// Looks `name` up in `profiles` (ConfigError when unknown).
const SkillProfile& find_profile(const std::map<std::string, SkillProfile>& profiles,
                                 const std::string& name);

PartnerSpec make_surrogate(const SkillProfile& profile, Channel channel);
PartnerSpec make_surrogate(const std::string& profile_name, Channel channel);

/// The surrogate's control law evaluated on an already perceived state:
/// PD on its own observable, plus the ball correction when `ball_task` is set,
/// clamped to [-1, 1].
double surrogate_control_law(const PartnerSpec& spec, const EnvState& perceived, bool ball_task,
                             double gain_scale = 1.0);

/// Stand-in for the human partner. Stateful across steps of one episode
/// (delay line, smoothing memory, drift factor).
class Partner {
 public:
  virtual ~Partner() = default;
  virtual PartnerKind kind() const = 0;
  virtual Channel channel() const = 0;
  virtual void begin_episode(std::mt19937_64& rng) = 0;
  /// Normalized action in [-1, 1] for the current step.
  virtual double act(const EnvState& state, const TaskSet& own_tasks, std::mt19937_64& rng) = 0;
  virtual void end_episode() {}
};

class AbsentPartner final : public Partner {
 public:
  explicit AbsentPartner(Channel channel) : channel_(channel) {}
  PartnerKind kind() const override { return PartnerKind::Absent; }
  Channel channel() const override { return channel_; }
  void begin_episode(std::mt19937_64&) override {}
  double act(const EnvState&, const TaskSet&, std::mt19937_64&) override { return 0.0; }

 private:
  Channel channel_;
};

class SurrogatePartner final : public Partner {
 public:
  explicit SurrogatePartner(PartnerSpec spec);

  PartnerKind kind() const override { return PartnerKind::Surrogate; }
  Channel channel() const override { return spec_.channel; }
  void begin_episode(std::mt19937_64& rng) override;
  double act(const EnvState& state, const TaskSet& own_tasks, std::mt19937_64& rng) override;

  const PartnerSpec& spec() const { return spec_; }
  double gain_scale() const { return gain_scale_; }

 private:
  EnvState perceive(const EnvState& state, std::mt19937_64& rng) const;

  PartnerSpec spec_;
  std::deque<EnvState> history_;
  double previous_ = 0.0;
  double gain_scale_ = 1.0;
};

/// Replays a fixed action sequence (for example one recorded from a live
/// session). Returns 0 after the sequence is exhausted.
class ScriptedPartner final : public Partner {
 public:
  ScriptedPartner(Channel channel, std::vector<double> actions);
  PartnerKind kind() const override { return PartnerKind::Remote; }
  Channel channel() const override { return channel_; }
  void begin_episode(std::mt19937_64&) override {}
  double act(const EnvState&, const TaskSet&, std::mt19937_64&) override;
  std::size_t consumed() const { return next_; }

 private:
  Channel channel_;
  std::vector<double> actions_;
  std::size_t next_ = 0;
};

/// One-shot partner action for the given kind: absent gives 0, surrogate
/// uses its control law on `state_view` (already delayed and noisy).
double partner_action(const PartnerSpec& spec, const EnvState& state_view, const TaskSet& own_tasks);

/// Human-side reward; display only, identical arithmetic to the robot's.
double human_reward(const Observation& obs, const RoleAssignment& assignment, const TaskSet& active,
                    const DecompositionTree& tree);

/// Physical input contributed by a normalized partner action.
ControlInput partner_input(Channel channel, double normalized, const PhysicsParams& params);

void to_json(nlohmann::json& j, const SkillProfile& p);
void from_json(const nlohmann::json& j, SkillProfile& p);

}  // namespace hrc
