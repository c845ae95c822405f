#include "hrc/partner_models.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "hrc/error.hpp"

namespace hrc {

std::string to_string(PartnerKind k) {
  switch (k) {
    case PartnerKind::Absent: return "absent";
    case PartnerKind::Surrogate: return "surrogate";
    case PartnerKind::Remote: return "remote";
  }
  return "?";
}

void PartnerSpec::validate() const {
  if (!(noise.slider_pos >= 0.0 && noise.pendulum_angle >= 0.0 && noise.ball_pos >= 0.0 &&
        noise.rate_factor >= 0.0))
    throw ConfigError("partner perception noise must be >= 0");
  if (reaction_delay < 0) throw ConfigError("partner reaction_delay must be >= 0");
  if (!(gain_drift_rate >= 0.0 && gain_drift_rate < 1.0))
    throw ConfigError("partner gain_drift_rate must lie in [0, 1)");
  if (!(action_smoothing >= 0.0 && action_smoothing <= 1.0))
    throw ConfigError("partner action_smoothing must lie in [0, 1]");
}

const std::map<std::string, SkillProfile>& default_profiles() {
  static const std::map<std::string, SkillProfile> profiles = [] {
    const ControlGains slider{2.0, 0.5, 1.0, 0.5};
    const ControlGains pendulum{1.6, 0.4, 1.2, 0.9};
    std::map<std::string, SkillProfile> p;
    p["ideal"] = {"ideal", {0.0, 0.0, 0.0, 2.0}, 0, 0.0, 0.0, slider, pendulum};
    // Reads the slider well, the pendulum angle less so.
    p["skilled_translation"] = {"skilled_translation", {0.005, 0.03, 0.01, 2.0}, 1, 0.1, 0.2,
                                slider, pendulum};
    // Struggles to judge when the pendulum is level and reacts late.
    p["weak_rotation"] = {"weak_rotation", {0.01, 0.08, 0.02, 2.0}, 2, 0.2, 0.3,
                          slider, pendulum};
    return p;
  }();
  return profiles;
}

const SkillProfile& find_profile(const std::map<std::string, SkillProfile>& profiles,
                                 const std::string& name) {
  auto it = profiles.find(name);
  if (it == profiles.end()) throw ConfigError("unknown skill profile '" + name + "'");
  return it->second;
}

PartnerSpec make_surrogate(const SkillProfile& profile, Channel channel) {
  PartnerSpec spec;
  spec.kind = PartnerKind::Surrogate;
  spec.channel = channel;
  spec.noise = profile.noise;
  spec.reaction_delay = profile.reaction_delay;
  spec.gain_drift_rate = profile.gain_drift_rate;
  spec.action_smoothing = profile.action_smoothing;
  spec.gains = channel == Channel::SliderForce ? profile.slider_gains : profile.pendulum_gains;
  spec.validate();
  return spec;
}

PartnerSpec make_surrogate(const std::string& profile_name, Channel channel) {
  return make_surrogate(find_profile(default_profiles(), profile_name), channel);
}

double surrogate_control_law(const PartnerSpec& spec, const EnvState& s, bool ball_task,
                             double gain_scale) {
  const ControlGains& g = spec.gains;
  double action = 0.0;
  const double ball = s.ball_pos;
  const double ball_rate = s.ball_vel;
  if (spec.channel == Channel::SliderForce) {
    action = -(g.kp * s.slider_pos + g.kd * s.slider_vel);
    // Pushing up raises effective gravity, which speeds the ball downhill;
    // downhill is toward -ball_pos when the angle is positive.
    if (ball_task) action += (g.kb * ball + g.kbd * ball_rate) * std::sin(s.pendulum_angle);
  } else {
    action = -(g.kp * s.pendulum_angle + g.kd * s.pendulum_rate);
    // A positive angle rolls the ball toward -ball_pos.
    if (ball_task) action += g.kb * ball + g.kbd * ball_rate;
  }
  return std::clamp(gain_scale * action, -1.0, 1.0);
}

double partner_action(const PartnerSpec& spec, const EnvState& state_view, const TaskSet& own_tasks) {
  switch (spec.kind) {
    case PartnerKind::Absent: return 0.0;
    case PartnerKind::Surrogate:
      return surrogate_control_law(spec, state_view, own_tasks.count(kBallTask) > 0);
    case PartnerKind::Remote:
      throw ConfigError("remote partner actions come from the session server");
  }
  return 0.0;
}

SurrogatePartner::SurrogatePartner(PartnerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

void SurrogatePartner::begin_episode(std::mt19937_64& rng) {
  history_.clear();
  previous_ = 0.0;
  gain_scale_ = 1.0;
  if (spec_.gain_drift_rate > 0.0)
    gain_scale_ = std::uniform_real_distribution<double>(1.0 - spec_.gain_drift_rate,
                                                         1.0 + spec_.gain_drift_rate)(rng);
}

EnvState SurrogatePartner::perceive(const EnvState& s, std::mt19937_64& rng) const {
  auto noisy = [&](double value, double sigma) {
    if (sigma <= 0.0) return value;
    return value + std::normal_distribution<double>(0.0, sigma)(rng);
  };
  const PerceptionNoise& n = spec_.noise;
  EnvState p = s;
  p.slider_pos = noisy(s.slider_pos, n.slider_pos);
  p.slider_vel = noisy(s.slider_vel, n.rate_factor * n.slider_pos);
  p.pendulum_angle = noisy(s.pendulum_angle, n.pendulum_angle);
  p.pendulum_rate = noisy(s.pendulum_rate, n.rate_factor * n.pendulum_angle);
  p.ball_pos = noisy(s.ball_pos, n.ball_pos);
  p.ball_vel = noisy(s.ball_vel, n.rate_factor * n.ball_pos);
  return p;
}

double SurrogatePartner::act(const EnvState& state, const TaskSet& own_tasks, std::mt19937_64& rng) {
  history_.push_back(perceive(state, rng));
  while (history_.size() > static_cast<std::size_t>(spec_.reaction_delay) + 1) history_.pop_front();
  // The front is the newest state at least reaction_delay steps old.
  const double raw = surrogate_control_law(spec_, history_.front(), own_tasks.count(kBallTask) > 0,
                                           gain_scale_);
  const double smoothed = spec_.action_smoothing * previous_ + (1.0 - spec_.action_smoothing) * raw;
  previous_ = std::clamp(smoothed, -1.0, 1.0);
  return previous_;
}

ScriptedPartner::ScriptedPartner(Channel channel, std::vector<double> actions)
    : channel_(channel), actions_(std::move(actions)) {}

double ScriptedPartner::act(const EnvState&, const TaskSet&, std::mt19937_64&) {
  if (next_ >= actions_.size()) return 0.0;
  return std::clamp(actions_[next_++], -1.0, 1.0);
}

double human_reward(const Observation& obs, const RoleAssignment& assignment, const TaskSet& active,
                    const DecompositionTree& tree) {
  return total_reward(obs, assignment, Member::Human, active, tree);
}

ControlInput partner_input(Channel channel, double normalized, const PhysicsParams& params) {
  const double a = std::clamp(normalized, -1.0, 1.0);
  if (channel == Channel::SliderForce) return {a * params.force_limit, 0.0};
  return {0.0, a * params.torque_limit};
}

namespace {

void gains_to_json(nlohmann::json& j, const ControlGains& g) {
  j = {{"kp", g.kp}, {"kd", g.kd}, {"kb", g.kb}, {"kbd", g.kbd}};
}

ControlGains gains_from_json(const nlohmann::json& j, ControlGains g) {
  g.kp = j.value("kp", g.kp);
  g.kd = j.value("kd", g.kd);
  g.kb = j.value("kb", g.kb);
  g.kbd = j.value("kbd", g.kbd);
  return g;
}

}  // namespace

void to_json(nlohmann::json& j, const SkillProfile& p) {
  nlohmann::json sg, pg;
  gains_to_json(sg, p.slider_gains);
  gains_to_json(pg, p.pendulum_gains);
  j = {{"name", p.name},
       {"perception_noise",
        {{"slider_pos", p.noise.slider_pos},
         {"pendulum_angle", p.noise.pendulum_angle},
         {"ball_pos", p.noise.ball_pos},
         {"rate_factor", p.noise.rate_factor}}},
       {"reaction_delay", p.reaction_delay},
       {"gain_drift_rate", p.gain_drift_rate},
       {"action_smoothing", p.action_smoothing},
       {"slider_gains", sg},
       {"pendulum_gains", pg}};
}

// Fields missing from `j` keep the values already in `p`, so a document can
// override a preset partially.
void from_json(const nlohmann::json& j, SkillProfile& p) {
  p.name = j.value("name", p.name);
  if (j.contains("perception_noise")) {
    const auto& n = j.at("perception_noise");
    p.noise.slider_pos = n.value("slider_pos", p.noise.slider_pos);
    p.noise.pendulum_angle = n.value("pendulum_angle", p.noise.pendulum_angle);
    p.noise.ball_pos = n.value("ball_pos", p.noise.ball_pos);
    p.noise.rate_factor = n.value("rate_factor", p.noise.rate_factor);
  }
  p.reaction_delay = j.value("reaction_delay", p.reaction_delay);
  p.gain_drift_rate = j.value("gain_drift_rate", p.gain_drift_rate);
  p.action_smoothing = j.value("action_smoothing", p.action_smoothing);
  if (j.contains("slider_gains")) p.slider_gains = gains_from_json(j.at("slider_gains"), p.slider_gains);
  if (j.contains("pendulum_gains"))
    p.pendulum_gains = gains_from_json(j.at("pendulum_gains"), p.pendulum_gains);
}

}  // namespace hrc
