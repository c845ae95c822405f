#include "hrc/env_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "hrc/error.hpp"
#include "hrc/numeric_text.hpp"

namespace hrc {

void PhysicsParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid physics parameter: ") + what);
  };
  require(slider_mass > 0.0, "slider_mass must be > 0");
  require(pendulum_inertia > 0.0, "pendulum_inertia must be > 0");
  // A massless ball is allowed: it decouples the ball from the pendulum.
  require(ball_mass >= 0.0, "ball_mass must be >= 0");
  require(pendulum_half_length > 0.0, "pendulum_half_length must be > 0");
  require(slider_half_range > 0.0, "slider_half_range must be > 0");
  require(gravity >= 0.0, "gravity must be >= 0");
  require(slider_damping >= 0.0, "slider_damping must be >= 0");
  require(pendulum_damping >= 0.0, "pendulum_damping must be >= 0");
  require(ball_damping >= 0.0, "ball_damping must be >= 0");
  require(force_limit >= 0.0, "force_limit must be >= 0");
  require(torque_limit >= 0.0, "torque_limit must be >= 0");
  require(dt > 0.0, "dt must be > 0");
  require(std::isfinite(slider_mass + pendulum_inertia + ball_mass + pendulum_half_length +
                        slider_half_range + gravity + slider_damping + pendulum_damping + ball_damping +
                        force_limit + torque_limit + dt),
          "all values must be finite");
}

EnvState::Vector EnvState::vector() const {
  Vector v;
  v << slider_pos, slider_vel, pendulum_angle, pendulum_rate, ball_pos, ball_vel;
  return v;
}

EnvState EnvState::from_vector(const Vector& v, double t) {
  return EnvState{v(0), v(1), v(2), v(3), v(4), v(5), t};
}

bool EnvState::finite() const { return vector().allFinite() && std::isfinite(t); }

namespace {

double sample(const Interval& range, std::mt19937_64& rng) {
  if (range.lo == range.hi) return range.lo;
  return std::uniform_real_distribution<double>(range.lo, range.hi)(rng);
}

void check_range(const Interval& range, double bound, const char* name) {
  if (!(range.lo <= range.hi) || !std::isfinite(range.lo) || !std::isfinite(range.hi))
    throw ConfigError(std::string("init range for ") + name + " is not an ordered interval");
  if (std::abs(range.lo) > bound || std::abs(range.hi) > bound)
    throw ConfigError(std::string("init range for ") + name + " exceeds the state bounds");
}

// Inelastic end stop: position pinned, velocity zeroed.
bool apply_stop(double& pos, double& vel, double limit) {
  if (pos > limit) {
    pos = limit;
    vel = 0.0;
    return true;
  }
  if (pos < -limit) {
    pos = -limit;
    vel = 0.0;
    return true;
  }
  return false;
}

}  // namespace

EnvState reset(const PhysicsParams& params, const InitRanges& ranges, std::uint64_t seed) {
  params.validate();
  const double inf = std::numeric_limits<double>::max();
  check_range(ranges.slider_pos, params.slider_half_range, "slider_pos");
  check_range(ranges.ball_pos, params.pendulum_half_length, "ball_pos");
  check_range(ranges.pendulum_angle, inf, "pendulum_angle");
  check_range(ranges.slider_vel, inf, "slider_vel");
  check_range(ranges.pendulum_rate, inf, "pendulum_rate");
  check_range(ranges.ball_vel, inf, "ball_vel");

  std::mt19937_64 rng(seed);
  EnvState s;
  s.slider_pos = sample(ranges.slider_pos, rng);
  s.slider_vel = sample(ranges.slider_vel, rng);
  s.pendulum_angle = sample(ranges.pendulum_angle, rng);
  s.pendulum_rate = sample(ranges.pendulum_rate, rng);
  s.ball_pos = sample(ranges.ball_pos, rng);
  s.ball_vel = sample(ranges.ball_vel, rng);
  s.t = 0.0;
  return s;
}

EnvState::Vector dynamics_derivative(const EnvState::Vector& x, ControlInput input,
                                     const PhysicsParams& p) {
  const double slider_vel = x(1);
  const double angle = x(2);
  const double rate = x(3);
  const double ball = x(4);
  const double ball_vel = x(5);

  const double slider_acc = (input.slider_force - p.slider_damping * slider_vel) / p.slider_mass;
  const double angle_acc = (input.pendulum_torque - p.pendulum_damping * rate -
                            p.ball_mass * p.gravity * ball * std::cos(angle)) /
                           p.pendulum_inertia;
  // Solid sphere rolling without slipping: 5/7 of the free-slide acceleration.
  const double ball_acc =
      (5.0 / 7.0) * (ball * rate * rate - (p.gravity + slider_acc) * std::sin(angle)) -
      p.ball_damping * ball_vel;

  EnvState::Vector dx;
  dx << slider_vel, slider_acc, rate, angle_acc, ball_vel, ball_acc;
  return dx;
}

EnvState step(const EnvState& state, ControlInput input, const PhysicsParams& p,
              StepReport* report) {
  if (!state.finite()) throw NumericFault("step: non-finite environment state");
  if (!std::isfinite(input.slider_force) || !std::isfinite(input.pendulum_torque))
    throw NumericFault("step: non-finite control input");

  StepReport local;
  const double force = std::clamp(input.slider_force, -p.force_limit, p.force_limit);
  const double torque = std::clamp(input.pendulum_torque, -p.torque_limit, p.torque_limit);
  local.force_clamped = force != input.slider_force;
  local.torque_clamped = torque != input.pendulum_torque;

  const EnvState::Vector x = state.vector();
  const EnvState::Vector dx = dynamics_derivative(x, {force, torque}, p);

  // Velocities first, then positions from the updated velocities.
  EnvState next = state;
  next.slider_vel = x(1) + p.dt * dx(1);
  next.pendulum_rate = x(3) + p.dt * dx(3);
  next.ball_vel = x(5) + p.dt * dx(5);
  next.slider_pos = x(0) + p.dt * next.slider_vel;
  next.pendulum_angle = x(2) + p.dt * next.pendulum_rate;
  next.ball_pos = x(4) + p.dt * next.ball_vel;
  next.t = state.t + p.dt;

  local.ball_at_stop = apply_stop(next.ball_pos, next.ball_vel, p.pendulum_half_length);
  local.slider_at_stop = apply_stop(next.slider_pos, next.slider_vel, p.slider_half_range);

  if (!next.finite()) throw NumericFault("step: integration produced a non-finite state");
  if (report) *report = local;
  return next;
}

Observation observe(const EnvState& state, double partner_prev_action) {
  return Observation{state.ball_pos, state.pendulum_angle, state.slider_pos, partner_prev_action};
}

namespace {

using Field = double PhysicsParams::*;

const std::map<std::string, Field>& physics_fields() {
  static const std::map<std::string, Field> fields = {
      {"slider_mass", &PhysicsParams::slider_mass},
      {"pendulum_inertia", &PhysicsParams::pendulum_inertia},
      {"ball_mass", &PhysicsParams::ball_mass},
      {"pendulum_half_length", &PhysicsParams::pendulum_half_length},
      {"slider_half_range", &PhysicsParams::slider_half_range},
      {"gravity", &PhysicsParams::gravity},
      {"slider_damping", &PhysicsParams::slider_damping},
      {"pendulum_damping", &PhysicsParams::pendulum_damping},
      {"ball_damping", &PhysicsParams::ball_damping},
      {"force_limit", &PhysicsParams::force_limit},
      {"torque_limit", &PhysicsParams::torque_limit},
      {"dt", &PhysicsParams::dt},
  };
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

PhysicsParams parse_physics_params(std::istream& in, const std::string& source_name) {
  PhysicsParams params;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = physics_fields().find(key);
    if (it == physics_fields().end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
      params.*(it->second) = parse_double(value, key);
    } catch (const FormatError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  params.validate();
  return params;
}

PhysicsParams load_physics_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open physics config: " + path.string());
  return parse_physics_params(in, path.string());
}

void write_physics_params(std::ostream& out, const PhysicsParams& params) {
  for (const auto& [key, field] : physics_fields())
    out << key << " = " << format_double(params.*field) << '\n';
}

void write_trajectory_csv(std::ostream& out, const std::vector<EnvState>& states) {
  out << kTrajectoryCsvHeader << '\n';
  for (const auto& s : states) {
    out << format_double(s.t) << ',' << format_double(s.slider_pos) << ','
        << format_double(s.slider_vel) << ',' << format_double(s.pendulum_angle) << ','
        << format_double(s.pendulum_rate) << ',' << format_double(s.ball_pos) << ','
        << format_double(s.ball_vel) << '\n';
  }
}

void save_trajectory_csv(const std::filesystem::path& path, const std::vector<EnvState>& states) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory: " + path.string());
  write_trajectory_csv(out, states);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace hrc
