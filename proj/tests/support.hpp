#pragma once

// Reference computations shared by the unit tests and the acceptance
// runner. The oracles never call into the library's arithmetic; the harness
// helpers at the bottom drive the library the same way in both places.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "hrc/dqn_agent.hpp"
#include "hrc/env_dynamics.hpp"

namespace testsupport {

// x = (C, C', P, P', B, B')
using State6 = std::array<double, 6>;

inline State6 rig_rates(const State6& x, double force, double torque, const hrc::PhysicsParams& p) {
  const double c_dd = force / p.slider_mass - p.slider_damping / p.slider_mass * x[1];
  const double ball_torque = p.ball_mass * p.gravity * x[4] * std::cos(x[2]);
  const double p_dd = (torque - p.pendulum_damping * x[3] - ball_torque) / p.pendulum_inertia;
  const double rolling = 5.0 / 7.0;
  const double b_dd = rolling * x[4] * x[3] * x[3] - rolling * (p.gravity + c_dd) * std::sin(x[2]) -
                      p.ball_damping * x[5];
  return {x[1], c_dd, x[3], p_dd, x[5], b_dd};
}

// Classic fourth-order Runge-Kutta, constant input, no end stops.
inline State6 rk4(State6 x, double force, double torque, const hrc::PhysicsParams& p, double horizon,
                  double h) {
  const long n = std::lround(horizon / h);
  auto axpy = [](const State6& a, double s, const State6& b) {
    State6 r;
    for (int i = 0; i < 6; ++i) r[i] = a[i] + s * b[i];
    return r;
  };
  for (long k = 0; k < n; ++k) {
    const State6 k1 = rig_rates(x, force, torque, p);
    const State6 k2 = rig_rates(axpy(x, h / 2, k1), force, torque, p);
    const State6 k3 = rig_rates(axpy(x, h / 2, k2), force, torque, p);
    const State6 k4 = rig_rates(axpy(x, h, k3), force, torque, p);
    for (int i = 0; i < 6; ++i) x[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return x;
}

inline State6 to_array(const hrc::EnvState& s) {
  return {s.slider_pos, s.slider_vel, s.pendulum_angle, s.pendulum_rate, s.ball_pos, s.ball_vel};
}

inline double max_abs_diff(const State6& a, const State6& b) {
  double m = 0.0;
  for (int i = 0; i < 6; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Deterministic 4-state chain: action 0 steps left, action 1 steps right,
// both saturating at the ends. Landing on state 3 pays 1.
struct ChainMdp {
  static constexpr int kStates = 4;
  static constexpr int kActions = 2;

  static int next(int s, int a) { return a == 0 ? std::max(s - 1, 0) : std::min(s + 1, kStates - 1); }
  static double reward(int s, int a) { return next(s, a) == kStates - 1 ? 1.0 : 0.0; }

  using Table = std::array<std::array<double, kActions>, kStates>;

  static Table bellman(const Table& q, double gamma) {
    Table out{};
    for (int s = 0; s < kStates; ++s)
      for (int a = 0; a < kActions; ++a) {
        const int n = next(s, a);
        out[s][a] = reward(s, a) + gamma * std::max(q[n][0], q[n][1]);
      }
    return out;
  }

  static double sup_distance(const Table& x, const Table& y) {
    double d = 0.0;
    for (int s = 0; s < kStates; ++s)
      for (int a = 0; a < kActions; ++a) d = std::max(d, std::abs(x[s][a] - y[s][a]));
    return d;
  }

  // Exact fixed point by value iteration to machine precision.
  static Table optimal(double gamma) {
    Table q{};
    for (int it = 0; it < 100000; ++it) {
      const Table n = bellman(q, gamma);
      if (sup_distance(n, q) == 0.0) return n;
      q = n;
    }
    return q;
  }
};

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("hrc_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- harness ----

// The library's stepper run at step size dt for `horizon` seconds.
inline hrc::EnvState simulate(hrc::EnvState s, hrc::ControlInput u, hrc::PhysicsParams p, double dt, double horizon) {
  p.dt = dt;
  const long n = std::lround(horizon / dt);
  for (long k = 0; k < n; ++k) s = hrc::step(s, u, p);
  return s;
}

// Random networks and batches for gradient checks.
inline hrc::Features random_features(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  hrc::Features f;
  for (int i = 0; i < hrc::kObservationSize; ++i) f(i) = u(rng);
  return f;
}

inline hrc::QNetwork random_net(const std::vector<int>& sizes, std::mt19937_64& rng) {
  hrc::QNetwork net = hrc::QNetwork::he_initialized(sizes, rng);
  std::uniform_real_distribution<double> b(-0.3, 0.3);
  for (auto& layer : net.layers())
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = b(rng);
  return net;
}

inline std::vector<hrc::Transition> random_batch(std::mt19937_64& rng, int size, int actions) {
  std::uniform_int_distribution<int> act(0, actions - 1);
  std::uniform_real_distribution<double> r(-1.0, 2.0);
  std::vector<hrc::Transition> batch;
  for (int i = 0; i < size; ++i) batch.push_back({random_features(rng), act(rng), r(rng), random_features(rng)});
  return batch;
}

// Smallest |pre-activation| of any hidden unit over the batch.
inline double closest_to_kink(const hrc::QNetwork& net, const std::vector<hrc::Transition>& batch) {
  double closest = INFINITY;
  const auto& layers = net.layers();
  for (const auto& t : batch) {
    std::vector<double> a(t.obs.data(), t.obs.data() + t.obs.size());
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
      std::vector<double> z(static_cast<std::size_t>(layers[k].weights.rows()));
      for (std::size_t r = 0; r < z.size(); ++r) {
        double sum = layers[k].bias(static_cast<Eigen::Index>(r));
        for (std::size_t c = 0; c < a.size(); ++c)
          sum += layers[k].weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * a[c];
        closest = std::min(closest, std::abs(sum));
        z[r] = std::max(sum, 0.0);
      }
      a = z;
    }
  }
  return closest;
}

// Worst relative error between backprop and central differences of the batch
// loss over `trials` seeded networks. A rectifier within h of its kink makes
// the difference quotient straddle two slopes, so such batches are redrawn.
inline double worst_gradient_error(int trials, double h) {
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    const hrc::QNetwork target = random_net({4, 16, 16, 5}, rng);
    hrc::QNetwork net = random_net({4, 16, 16, 5}, rng);
    auto batch = random_batch(rng, 8, 5);
    while (closest_to_kink(net, batch) < 1e-3) batch = random_batch(rng, 8, 5);
    const auto grads = hrc::batch_gradient(net, target, batch, 0.9);
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
      auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = hrc::batch_loss(net, target, batch, 0.9);
        param = saved - h;
        const double down = hrc::batch_loss(net, target, batch, 0.9);
        param = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
        worst = std::max(worst, std::abs(analytic - numeric) / scale);
      };
      auto& layer = net.layers()[k];
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) check(layer.weights(r, c), grads[k].weights(r, c));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) check(layer.bias(r), grads[k].bias(r));
    }
  }
  return worst;
}

inline hrc::Features one_hot(int s) {
  hrc::Features f = hrc::Features::Zero();
  f(s) = 1.0;
  return f;
}

// Fills replay with every chain transition and runs `updates` DQN updates.
inline hrc::DqnAgent train_on_chain(std::uint64_t seed, long updates, double gamma = 0.9) {
  hrc::AgentConfig config;
  config.gamma = gamma;
  config.replay_capacity = 1000;
  hrc::DqnAgent agent(config, ChainMdp::kActions, seed);
  for (int copy = 0; copy < 100; ++copy)
    for (int s = 0; s < ChainMdp::kStates; ++s)
      for (int a = 0; a < ChainMdp::kActions; ++a)
        agent.remember({one_hot(s), a, ChainMdp::reward(s, a), one_hot(ChainMdp::next(s, a))});
  for (long i = 0; i < updates; ++i) agent.train_step();
  return agent;
}

inline double chain_q_error(const hrc::DqnAgent& agent, const ChainMdp::Table& optimal) {
  double worst = 0.0;
  for (int s = 0; s < ChainMdp::kStates; ++s) {
    const Eigen::VectorXd q = agent.q_values(one_hot(s));
    for (int a = 0; a < ChainMdp::kActions; ++a) worst = std::max(worst, std::abs(q(a) - optimal[s][a]));
  }
  return worst;
}

}  // namespace testsupport
