#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hrc {

/// Physical constants of the slider-pendulum-ball rig. The slider translates
/// along a vertical rod (gravity compensated by its actuator), the pendulum
/// rotates about the slider, and the ball rolls along the pendulum.
struct PhysicsParams {
  // Inertia and damping are sized so explicit stepping at dt = 0.2 s stays
  // stable; lighter, looser settings diverge at that step.
  double slider_mass = 1.0;            // kg
  double pendulum_inertia = 1.0;       // kg m^2
  double ball_mass = 0.2;              // kg
  double pendulum_half_length = 0.5;   // m
  double slider_half_range = 0.5;      // m
  double gravity = 9.81;               // m/s^2
  double slider_damping = 4.0;         // N s/m
  double pendulum_damping = 4.0;       // N m s/rad
  double ball_damping = 2.0;           // 1/s, rolling resistance
  double force_limit = 2.0;            // N
  double torque_limit = 2.0;           // N m
  double dt = 0.2;                     // s

  /// Throws ConfigError on non-positive masses/lengths/dt or negative limits.
  void validate() const;
};

// Angles: pendulum_angle > 0 lifts the +ball_pos end, so the ball rolls
// toward negative ball_pos.
struct EnvState {
  double slider_pos = 0.0;
  double slider_vel = 0.0;
  double pendulum_angle = 0.0;
  double pendulum_rate = 0.0;
  double ball_pos = 0.0;
  double ball_vel = 0.0;
  double t = 0.0;

  using Vector = Eigen::Matrix<double, 6, 1>;

  /// (slider_pos, slider_vel, pendulum_angle, pendulum_rate, ball_pos, ball_vel)
  Vector vector() const;
  static EnvState from_vector(const Vector& v, double t = 0.0);

  bool finite() const;
  bool operator==(const EnvState&) const = default;
};

/// What the robot sees: three positions and its partner's previous action.
struct Observation {
  double ball_pos = 0.0;
  double pendulum_angle = 0.0;
  double slider_pos = 0.0;
  double partner_prev_action = 0.0;  // normalized, 0 when no partner

  bool operator==(const Observation&) const = default;
};

struct ControlInput {
  double slider_force = 0.0;     // N
  double pendulum_torque = 0.0;  // N m
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Per-field sampling intervals for episode starts.
struct InitRanges {
  Interval slider_pos;
  Interval slider_vel;
  Interval pendulum_angle;
  Interval pendulum_rate;
  Interval ball_pos;
  Interval ball_vel;
};

/// Flags raised while stepping; useful for diagnostics and tests.
struct StepReport {
  bool force_clamped = false;
  bool torque_clamped = false;
  bool ball_at_stop = false;
  bool slider_at_stop = false;
};

EnvState reset(const PhysicsParams& params, const InitRanges& ranges, std::uint64_t seed);

/// Advances the rig by one semi-implicit Euler step of params.dt.
/// Inputs beyond the actuator limits are clamped (and flagged in `report`).
/// Throws NumericFault if the state or input is not finite.
EnvState step(const EnvState& state, ControlInput input, const PhysicsParams& params,
              StepReport* report = nullptr);

Observation observe(const EnvState& state, double partner_prev_action);

/// Time derivative of EnvState::vector() with no end constraints applied.
EnvState::Vector dynamics_derivative(const EnvState::Vector& x, ControlInput input,
                                     const PhysicsParams& params);

/// Reads `key = value` lines ('#' starts a comment). Unknown keys are errors.
PhysicsParams load_physics_params(const std::filesystem::path& path);
PhysicsParams parse_physics_params(std::istream& in, const std::string& source_name);
void write_physics_params(std::ostream& out, const PhysicsParams& params);

inline constexpr const char* kTrajectoryCsvHeader = "t,C_x,C_x_dot,P_z,P_z_dot,B_y,B_y_dot";

void write_trajectory_csv(std::ostream& out, const std::vector<EnvState>& states);
void save_trajectory_csv(const std::filesystem::path& path, const std::vector<EnvState>& states);

}  // namespace hrc
