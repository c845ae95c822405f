#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>

#include "hrc/curriculum.hpp"
#include "hrc/error.hpp"
#include "hrc/partner_models.hpp"

using namespace hrc;

namespace {

PartnerSpec clean_spec(Channel channel, ControlGains gains) {
  PartnerSpec spec = make_surrogate("ideal", channel);
  spec.gains = gains;
  return spec;
}

// Partner drives the pendulum alone from a seeded start; returns the
// time-integrated |P_z|.
double pendulum_effort(const std::string& profile, std::uint64_t seed) {
  const ExperimentConfig config = ExperimentConfig::defaults();
  SurrogatePartner partner(make_surrogate(profile, Channel::PendulumTorque));
  std::mt19937_64 rng(seed);
  partner.begin_episode(rng);
  EnvState s = reset(config.physics, config.init, seed);
  const TaskSet tasks{kPendulumTask, kBallTask};
  double integral = 0.0;
  for (int k = 0; k < config.steps_per_episode(); ++k) {
    const double a = partner.act(s, tasks, rng);
    s = step(s, partner_input(Channel::PendulumTorque, a, config.physics), config.physics);
    integral += std::abs(s.pendulum_angle) * config.physics.dt;
  }
  return integral;
}

}  // namespace

TEST(PartnerAction, AbsentIsAlwaysZero) {
  PartnerSpec absent;
  EnvState s;
  s.slider_pos = 0.4;
  s.pendulum_angle = -0.3;
  EXPECT_EQ(partner_action(absent, s, {kSliderTask, kBallTask}), 0.0);
  AbsentPartner p(Channel::SliderForce);
  std::mt19937_64 rng(1);
  EXPECT_EQ(p.act(s, {kSliderTask}, rng), 0.0);
}

TEST(PartnerAction, ZeroStateGivesZero) {
  for (Channel c : {Channel::SliderForce, Channel::PendulumTorque}) {
    const PartnerSpec spec = make_surrogate("ideal", c);
    EXPECT_EQ(partner_action(spec, EnvState{}, {kSliderTask, kPendulumTask, kBallTask}), 0.0);
  }
}

TEST(PartnerAction, SliderPdExample) {
  EnvState s;
  s.slider_pos = 0.2;
  const PartnerSpec spec = clean_spec(Channel::SliderForce, {2.0, 0.5, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(partner_action(spec, s, {kSliderTask}), -0.4);
}

TEST(PartnerAction, DerivativeAndBallTerms) {
  EnvState s;
  s.pendulum_angle = 0.1;
  s.pendulum_rate = -0.2;
  s.ball_pos = 0.25;
  s.ball_vel = 0.1;
  const PartnerSpec spec = clean_spec(Channel::PendulumTorque, {1.6, 0.4, 1.2, 0.9});
  // -(1.6 * 0.1 + 0.4 * -0.2) = -0.08; ball term 1.2 * 0.25 + 0.9 * 0.1 = 0.39.
  EXPECT_NEAR(partner_action(spec, s, {kPendulumTask}), -0.08, 1e-15);
  EXPECT_NEAR(partner_action(spec, s, {kPendulumTask, kBallTask}), 0.31, 1e-15);
}

TEST(PartnerAction, SliderBallTermScalesWithTilt) {
  EnvState s;
  s.ball_pos = 0.3;
  const PartnerSpec spec = clean_spec(Channel::SliderForce, {2.0, 0.5, 1.0, 0.0});
  EXPECT_EQ(partner_action(spec, s, {kSliderTask, kBallTask}), 0.0);
  s.pendulum_angle = std::numbers::pi / 6;
  EXPECT_NEAR(partner_action(spec, s, {kSliderTask, kBallTask}), 0.15, 1e-15);
}

TEST(PartnerAction, OutputClampedForAnyInput) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> wild(-50.0, 50.0);
  for (const auto& [name, profile] : default_profiles()) {
    for (Channel c : {Channel::SliderForce, Channel::PendulumTorque}) {
      SurrogatePartner partner(make_surrogate(profile, c));
      partner.begin_episode(rng);
      for (int i = 0; i < 500; ++i) {
        const EnvState s{wild(rng), wild(rng), wild(rng), wild(rng), wild(rng), wild(rng), 0.0};
        const double a = partner.act(s, {kSliderTask, kPendulumTask, kBallTask}, rng);
        ASSERT_GE(a, -1.0);
        ASSERT_LE(a, 1.0);
      }
    }
  }
}

TEST(PartnerAction, RemoteSpecIsNotEvaluatedHere) {
  PartnerSpec remote;
  remote.kind = PartnerKind::Remote;
  EXPECT_THROW(partner_action(remote, EnvState{}, {}), ConfigError);
}

TEST(Surrogate, ReactionDelayShiftsResponseExactly) {
  for (int d : {0, 1, 3}) {
    PartnerSpec spec = clean_spec(Channel::SliderForce, {2.0, 0.5, 0.0, 0.0});
    spec.reaction_delay = d;
    SurrogatePartner partner(spec);
    std::mt19937_64 rng(1);
    partner.begin_episode(rng);
    const int k = 5;
    int first = -1;
    for (int i = 0; i < 15; ++i) {
      EnvState s;
      if (i >= k) s.slider_pos = 0.2;
      const double a = partner.act(s, {kSliderTask}, rng);
      if (first < 0 && a != 0.0) first = i;
    }
    EXPECT_EQ(first, k + d) << "delay " << d;
  }
}

TEST(Surrogate, SmoothingIsFirstOrderLowPass) {
  PartnerSpec spec = clean_spec(Channel::SliderForce, {2.0, 0.0, 0.0, 0.0});
  spec.action_smoothing = 0.25;
  SurrogatePartner partner(spec);
  std::mt19937_64 rng(1);
  partner.begin_episode(rng);
  EnvState s;
  s.slider_pos = 0.2;
  // Raw action -0.4 each step; output y_k = 0.25 y_{k-1} + 0.75 * -0.4.
  double expected = 0.0;
  for (int i = 0; i < 6; ++i) {
    expected = 0.25 * expected + 0.75 * -0.4;
    EXPECT_NEAR(partner.act(s, {kSliderTask}, rng), expected, 1e-15);
  }
}

TEST(Surrogate, GainDriftStaysWithinRateAndResetsPerEpisode) {
  PartnerSpec spec = make_surrogate("weak_rotation", Channel::PendulumTorque);
  SurrogatePartner partner(spec);
  std::mt19937_64 rng(9);
  double lo = 2.0, hi = 0.0;
  for (int e = 0; e < 200; ++e) {
    partner.begin_episode(rng);
    lo = std::min(lo, partner.gain_scale());
    hi = std::max(hi, partner.gain_scale());
  }
  EXPECT_GE(lo, 1.0 - spec.gain_drift_rate);
  EXPECT_LE(hi, 1.0 + spec.gain_drift_rate);
  EXPECT_LT(lo, 0.9);
  EXPECT_GT(hi, 1.1);

  SurrogatePartner ideal(make_surrogate("ideal", Channel::PendulumTorque));
  ideal.begin_episode(rng);
  EXPECT_EQ(ideal.gain_scale(), 1.0);
}

TEST(Surrogate, AbsentPartnerRolloutEqualsZeroChannel) {
  const ExperimentConfig config = ExperimentConfig::defaults();
  std::mt19937_64 actions(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> robot;
  for (int k = 0; k < 200; ++k) robot.push_back(u(actions));

  AbsentPartner absent(Channel::PendulumTorque);
  std::mt19937_64 rng(1);
  EnvState a = reset(config.physics, config.init, 12);
  EnvState b = a;
  for (double r : robot) {
    ControlInput with = partner_input(Channel::PendulumTorque, absent.act(a, {kPendulumTask}, rng), config.physics);
    with.slider_force = r * config.physics.force_limit;
    a = step(a, with, config.physics);
    b = step(b, {r * config.physics.force_limit, 0.0}, config.physics);
    ASSERT_EQ(a, b);
  }
}

TEST(Surrogate, WeakRotationTiltsMoreThanIdeal) {
  double weak = 0.0, ideal = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    weak += pendulum_effort("weak_rotation", seed);
    ideal += pendulum_effort("ideal", seed);
  }
  EXPECT_GT(weak, ideal);
}

TEST(Profiles, PresetContracts) {
  const PartnerSpec ideal = make_surrogate("ideal", Channel::SliderForce);
  EXPECT_EQ(ideal.kind, PartnerKind::Surrogate);
  EXPECT_EQ(ideal.noise.slider_pos, 0.0);
  EXPECT_EQ(ideal.noise.pendulum_angle, 0.0);
  EXPECT_EQ(ideal.reaction_delay, 0);
  EXPECT_EQ(ideal.gain_drift_rate, 0.0);

  const PartnerSpec weak = make_surrogate("weak_rotation", Channel::PendulumTorque);
  EXPECT_GT(weak.noise.pendulum_angle, weak.noise.slider_pos);
  EXPECT_GT(weak.reaction_delay, 0);

  const PartnerSpec skilled = make_surrogate("skilled_translation", Channel::SliderForce);
  EXPECT_LT(skilled.noise.slider_pos, weak.noise.slider_pos);
  EXPECT_LT(skilled.noise.pendulum_angle, weak.noise.pendulum_angle);
  EXPECT_EQ(skilled.gains.kp, default_profiles().at("skilled_translation").slider_gains.kp);

  EXPECT_THROW(make_surrogate("clumsy", Channel::SliderForce), ConfigError);
}

TEST(Profiles, SpecValidation) {
  PartnerSpec spec;
  spec.reaction_delay = -1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = PartnerSpec{};
  spec.action_smoothing = 1.5;
  EXPECT_THROW(SurrogatePartner{spec}, ConfigError);
  spec = PartnerSpec{};
  spec.noise.pendulum_angle = -0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Profiles, JsonOverridesPartially) {
  SkillProfile p = default_profiles().at("weak_rotation");
  const nlohmann::json patch = {{"reaction_delay", 4}, {"perception_noise", {{"pendulum_angle", 0.2}}}};
  from_json(patch, p);
  EXPECT_EQ(p.reaction_delay, 4);
  EXPECT_EQ(p.noise.pendulum_angle, 0.2);
  EXPECT_EQ(p.noise.slider_pos, default_profiles().at("weak_rotation").noise.slider_pos);

  nlohmann::json j;
  to_json(j, p);
  SkillProfile back;
  from_json(j, back);
  EXPECT_EQ(back.name, "weak_rotation");
  EXPECT_EQ(back.reaction_delay, 4);
  EXPECT_EQ(back.pendulum_gains.kbd, p.pendulum_gains.kbd);
}

TEST(HumanReward, Examples) {
  const DecompositionTree tree = build_slider_pendulum_tree(PhysicsParams{});
  RoleAssignment roles;
  roles.robot_tasks = {kSliderTask, kBallTask};
  roles.human_tasks = {kPendulumTask, kBallTask};
  EXPECT_EQ(human_reward(Observation{}, roles, {kPendulumTask, kBallTask}, tree), 2.0);
  EXPECT_EQ(human_reward(Observation{0.3, 0.1, 0.2, 0.5}, roles, {}, tree), 0.0);

  RoleAssignment swapped;
  swapped.robot_tasks = {kPendulumTask};
  swapped.human_tasks = {kSliderTask};
  EXPECT_NEAR(human_reward(Observation{0.0, 0.0, 0.25, 0.0}, swapped, {kSliderTask}, tree),
              std::cos(std::numbers::pi / 4), 1e-15);
}

TEST(HumanReward, SameBitsAsRobotPath) {
  const DecompositionTree tree = build_slider_pendulum_tree(PhysicsParams{});
  RoleAssignment both;
  both.robot_tasks = {kSliderTask, kBallTask};
  both.human_tasks = {kSliderTask, kBallTask};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int i = 0; i < 1000; ++i) {
    const Observation obs{u(rng), u(rng), u(rng), u(rng)};
    const double h = human_reward(obs, both, {kSliderTask, kBallTask}, tree);
    const double r = total_reward(obs, both, Member::Robot, {kSliderTask, kBallTask}, tree);
    ASSERT_EQ(std::memcmp(&h, &r, sizeof h), 0);
  }
  EXPECT_THROW(human_reward(Observation{}, both, {kPendulumTask}, tree), ConfigError);
}

TEST(Scripted, ReplaysThenHoldsZero) {
  ScriptedPartner p(Channel::PendulumTorque, {0.5, 2.0, -0.25});
  std::mt19937_64 rng(1);
  EXPECT_EQ(p.act(EnvState{}, {}, rng), 0.5);
  EXPECT_EQ(p.act(EnvState{}, {}, rng), 1.0);
  EXPECT_EQ(p.act(EnvState{}, {}, rng), -0.25);
  EXPECT_EQ(p.act(EnvState{}, {}, rng), 0.0);
  EXPECT_EQ(p.consumed(), 3u);
}

TEST(PartnerInput, ScalesToChannelLimit) {
  const PhysicsParams p;
  EXPECT_EQ(partner_input(Channel::SliderForce, 0.5, p).slider_force, 0.5 * p.force_limit);
  EXPECT_EQ(partner_input(Channel::PendulumTorque, -3.0, p).pendulum_torque, -p.torque_limit);
  EXPECT_EQ(partner_input(Channel::PendulumTorque, -3.0, p).slider_force, 0.0);
}
