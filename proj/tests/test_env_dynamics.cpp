#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hrc/env_dynamics.hpp"
#include "hrc/error.hpp"
#include "support.hpp"

using namespace hrc;
using testsupport::simulate;

namespace {

EnvState tilted() {
  EnvState s;
  s.pendulum_angle = 0.1;
  return s;
}

}  // namespace

TEST(Reset, DegenerateRangesGiveZeroState) {
  const EnvState s = reset(PhysicsParams{}, InitRanges{}, 42);
  EXPECT_EQ(s, EnvState{});
}

TEST(Reset, SameSeedSameState) {
  InitRanges r;
  r.ball_pos = {-0.3, 0.3};
  r.pendulum_angle = {-0.2, 0.2};
  EXPECT_EQ(reset(PhysicsParams{}, r, 7), reset(PhysicsParams{}, r, 7));
  EXPECT_NE(reset(PhysicsParams{}, r, 7), reset(PhysicsParams{}, r, 8));
}

TEST(Reset, BallDrawsAreUniformOnTheirInterval) {
  InitRanges r;
  r.ball_pos = {-0.3, 0.3};
  double lo = 1.0, hi = -1.0, sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double b = reset(PhysicsParams{}, r, static_cast<std::uint64_t>(i)).ball_pos;
    lo = std::min(lo, b);
    hi = std::max(hi, b);
    sum += b;
  }
  EXPECT_GE(lo, -0.3);
  EXPECT_LE(hi, 0.3);
  // A uniform sample of this size should reach close to both ends.
  EXPECT_LT(lo, -0.29);
  EXPECT_GT(hi, 0.29);
  EXPECT_NEAR(sum / n, 0.0, 0.02);
}

TEST(Reset, RangeBeyondStateBoundsIsConfigError) {
  InitRanges r;
  r.ball_pos = {-0.6, 0.0};
  EXPECT_THROW(reset(PhysicsParams{}, r, 1), ConfigError);
  InitRanges s;
  s.slider_pos = {0.2, 0.1};
  EXPECT_THROW(reset(PhysicsParams{}, s, 1), ConfigError);
}

TEST(Step, ZeroStateIsBitExactFixedPoint) {
  EnvState s;
  const PhysicsParams p;
  for (int k = 0; k < 1000; ++k) {
    s = step(s, {}, p);
    ASSERT_EQ(s.vector(), EnvState::Vector::Zero()) << "step " << k;
  }
  EXPECT_NEAR(s.t, 1000 * p.dt, 1e-9);
}

TEST(Step, TiltedPendulumRollsBallTowardNegativeEnd) {
  const EnvState next = step(tilted(), {}, PhysicsParams{});
  EXPECT_LT(next.ball_vel, 0.0);
  EXPECT_LT(next.ball_pos, 0.0);
}

TEST(Step, TiltedPendulumSuccessorMatchesHandStep) {
  // One semi-implicit step by hand: only the ball accelerates, at
  // (5/7)(-g sin 0.1); velocity then position pick it up with factor dt.
  const EnvState next = step(tilted(), {}, PhysicsParams{});
  EXPECT_DOUBLE_EQ(next.ball_vel, -0.13990940247219777);
  EXPECT_DOUBLE_EQ(next.ball_pos, -0.027981880494439556);
  EXPECT_EQ(next.pendulum_angle, 0.1);
  EXPECT_EQ(next.pendulum_rate, 0.0);
  EXPECT_EQ(next.slider_pos, 0.0);
  EXPECT_EQ(next.slider_vel, 0.0);
  EXPECT_DOUBLE_EQ(next.t, 0.2);
}

TEST(Step, TiltedSuccessorWithinFirstOrderBoundOfRk4) {
  const PhysicsParams p;
  const auto exact = testsupport::rk4(testsupport::to_array(tilted()), 0, 0, p, p.dt, 1e-4);
  const auto euler = testsupport::to_array(step(tilted(), {}, p));
  // A single step of a first-order method is off by O(dt^2 * |x''|).
  const double accel = std::abs(testsupport::rig_rates(testsupport::to_array(tilted()), 0, 0, p)[5]);
  EXPECT_LE(testsupport::max_abs_diff(exact, euler), accel * p.dt * p.dt);
  EXPECT_LT(exact[4], 0.0);
}

TEST(Step, FirstOrderConvergenceAgainstRk4) {
  const PhysicsParams p;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  std::uniform_real_distribution<double> push(-0.2, 0.2);
  for (int trial = 0; trial < 10; ++trial) {
    EnvState s;
    s.slider_pos = small(rng);
    s.slider_vel = small(rng);
    s.pendulum_angle = small(rng);
    s.pendulum_rate = small(rng);
    s.ball_pos = small(rng);
    s.ball_vel = small(rng);
    const ControlInput u{push(rng), push(rng)};
    const auto exact = testsupport::rk4(testsupport::to_array(s), u.slider_force, u.pendulum_torque, p, 1.0, 1e-4);
    const double coarse = testsupport::max_abs_diff(exact, testsupport::to_array(simulate(s, u, p, 0.02, 1.0)));
    const double fine = testsupport::max_abs_diff(exact, testsupport::to_array(simulate(s, u, p, 0.01, 1.0)));
    const double ratio = coarse / fine;
    EXPECT_GE(ratio, 1.5) << "trial " << trial;
    EXPECT_LE(ratio, 2.5) << "trial " << trial;
  }
}

TEST(Step, EndStopsHoldUnderRandomActions) {
  const PhysicsParams p;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  EnvState s;
  for (int k = 0; k < 100000; ++k) {
    s = step(s, {unit(rng) * p.force_limit, unit(rng) * p.torque_limit}, p);
    ASSERT_LE(std::abs(s.ball_pos), p.pendulum_half_length);
    ASSERT_LE(std::abs(s.slider_pos), p.slider_half_range);
  }
}

TEST(Step, StopIsInelastic) {
  EnvState s;
  s.ball_pos = 0.49;
  s.ball_vel = 1.0;
  StepReport report;
  const EnvState next = step(s, {}, PhysicsParams{}, &report);
  EXPECT_TRUE(report.ball_at_stop);
  EXPECT_EQ(next.ball_pos, 0.5);
  EXPECT_EQ(next.ball_vel, 0.0);
}

TEST(Step, OversizedInputsAreClampedAndReported) {
  const PhysicsParams p;
  StepReport report;
  const EnvState clamped = step(EnvState{}, {100.0, -100.0}, p, &report);
  EXPECT_TRUE(report.force_clamped);
  EXPECT_TRUE(report.torque_clamped);
  EXPECT_EQ(clamped, step(EnvState{}, {p.force_limit, -p.torque_limit}, p));
  step(EnvState{}, {p.force_limit, 0.0}, p, &report);
  EXPECT_FALSE(report.force_clamped);
}

TEST(Step, NonFiniteInputsFault) {
  EnvState bad;
  bad.ball_vel = std::nan("");
  EXPECT_THROW(step(bad, {}, PhysicsParams{}), NumericFault);
  EXPECT_THROW(step(EnvState{}, {INFINITY, 0.0}, PhysicsParams{}), NumericFault);
}

TEST(Step, DampingDissipatesWithMasslessBall) {
  PhysicsParams p;
  p.ball_mass = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> v(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    EnvState s;
    s.slider_vel = v(rng);
    s.pendulum_rate = v(rng);
    s.pendulum_angle = 0.3 * v(rng);
    s.ball_pos = 0.4 * v(rng);
    double energy = s.slider_vel * s.slider_vel + s.pendulum_rate * s.pendulum_rate;
    for (int k = 0; k < 200; ++k) {
      s = step(s, {}, p);
      const double next = s.slider_vel * s.slider_vel + s.pendulum_rate * s.pendulum_rate;
      ASSERT_LE(next, energy);
      energy = next;
    }
  }
}

TEST(Step, DeterministicAcrossCalls) {
  EnvState s = tilted();
  s.slider_vel = 0.3;
  EXPECT_EQ(step(s, {0.7, -0.4}, PhysicsParams{}), step(s, {0.7, -0.4}, PhysicsParams{}));
}

TEST(Observe, ProjectsPositionsAndPartnerAction) {
  EXPECT_EQ(observe(EnvState{}, 0.0), Observation{});
  EnvState s;
  s.ball_pos = 0.2;
  s.pendulum_angle = -0.05;
  s.slider_pos = 0.1;
  s.ball_vel = 9.0;
  const Observation o = observe(s, 0.7);
  EXPECT_EQ(o, (Observation{0.2, -0.05, 0.1, 0.7}));
  EXPECT_EQ(observe(s, 0.0).partner_prev_action, 0.0);
}

TEST(PhysicsConfig, KeyValueRoundTrip) {
  PhysicsParams p;
  p.slider_mass = 1.25;
  p.dt = 0.1;
  std::stringstream ss;
  write_physics_params(ss, p);
  const PhysicsParams q = parse_physics_params(ss, "mem");
  EXPECT_EQ(q.slider_mass, 1.25);
  EXPECT_EQ(q.dt, 0.1);
  EXPECT_EQ(q.ball_damping, p.ball_damping);
}

TEST(PhysicsConfig, CommentsAndBlankLinesIgnored) {
  std::istringstream in("# rig\n\nball_mass = 0.3  # heavier\n");
  EXPECT_EQ(parse_physics_params(in, "mem").ball_mass, 0.3);
}

TEST(PhysicsConfig, BadInputsAreConfigErrors) {
  std::istringstream unknown("bogus = 1\n");
  EXPECT_THROW(parse_physics_params(unknown, "mem"), ConfigError);
  std::istringstream garbage("dt = fast\n");
  EXPECT_THROW(parse_physics_params(garbage, "mem"), ConfigError);
  std::istringstream no_eq("dt 0.2\n");
  EXPECT_THROW(parse_physics_params(no_eq, "mem"), ConfigError);
  std::istringstream negative("dt = -0.2\n");
  EXPECT_THROW(parse_physics_params(negative, "mem"), ConfigError);
  EXPECT_THROW(load_physics_params("/nonexistent/physics.kv"), IoError);
}

TEST(Trajectory, CsvHeaderAndRows) {
  std::vector<EnvState> states{EnvState{}, step(tilted(), {}, PhysicsParams{})};
  std::ostringstream out;
  write_trajectory_csv(out, states);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,C_x,C_x_dot,P_z,P_z_dot,B_y,B_y_dot");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0,0,0,0,0,0");
  std::getline(in, line);
  EXPECT_EQ(line, "0.2,0,0,0.1,0,-0.027981880494439556,-0.13990940247219777");
}
