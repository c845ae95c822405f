#include "hrc/curriculum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hrc/error.hpp"

namespace hrc {

std::string to_string(Category c) {
  switch (c) {
    case Category::LearnTaskFirst: return "learn_task_first";
    case Category::LearnHumanFirst: return "learn_human_first";
    case Category::LearnTogether: return "learn_together";
  }
  return "?";
}

void ConvergenceCriterion::validate() const {
  if (window < 1) throw ConfigError("convergence window must be >= 1");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("convergence threshold must lie in (0, 1]");
  if (patience < 1) throw ConfigError("convergence patience must be >= 1");
}

void TrainingCase::validate(const DecompositionTree& tree) const {
  if (robot_channel == partner_channel) throw ConfigError("robot and partner must drive different channels");
  if (auto v = assignment.validate(tree); !v.empty()) throw ConfigError("case role assignment: " + v.front());
  for (const auto& stage : stages) {
    stage.convergence.validate();
    if (!stage.partner_present && !stage.partner_tasks.empty())
      throw ConfigError("stage without partner cannot assign partner tasks");
    for (const auto& id : stage.robot_tasks)
      if (!assignment.robot_tasks.count(id)) throw ConfigError("stage task " + id.str() + " not owned by robot");
    for (const auto& id : stage.partner_tasks)
      if (!assignment.human_tasks.count(id)) throw ConfigError("stage task " + id.str() + " not owned by partner");
  }
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.init.slider_pos = {-0.3, 0.3};
  c.init.pendulum_angle = {-0.2, 0.2};
  c.init.ball_pos = {-0.3, 0.3};
  return c;
}

void ExperimentConfig::validate() const {
  physics.validate();
  agent.validate();
  curriculum.convergence.validate();
  ActionSet{Channel::SliderForce, action_levels}.validate();
  if (!(angle_range > 0.0)) throw ConfigError("angle_range must be > 0");
  if (!(curriculum.episode_duration >= physics.dt)) throw ConfigError("episode_duration must be >= dt");
  if (curriculum.eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (auto v = validate_tree(reward_tree()); !v.empty()) throw ConfigError("reward tree: " + v.front());
  // Sampling checks the init ranges against the state bounds.
  reset(physics, init, 0);
}

DecompositionTree ExperimentConfig::reward_tree() const {
  return tree ? *tree : build_slider_pendulum_tree(physics, angle_range);
}

ObservationScale ExperimentConfig::observation_scale() const {
  return ObservationScale::from(physics, angle_range);
}

int ExperimentConfig::steps_per_episode() const {
  return static_cast<int>(std::lround(curriculum.episode_duration / physics.dt));
}

TrainingCase build_case(int id, const CurriculumConfig& config) {
  if (id < 1 || id > 6) throw ConfigError("case id must be in 1..6, got " + std::to_string(id));
  TrainingCase c;
  c.id = id;
  c.category = id <= 2 ? Category::LearnTaskFirst : id <= 4 ? Category::LearnHumanFirst : Category::LearnTogether;
  // Odd cases: robot on the slider, partner on the pendulum. Even cases swap.
  const bool robot_on_slider = id % 2 == 1;
  c.robot_channel = robot_on_slider ? Channel::SliderForce : Channel::PendulumTorque;
  c.partner_channel = robot_on_slider ? Channel::PendulumTorque : Channel::SliderForce;
  const TaskId robot_leaf = robot_on_slider ? kSliderTask : kPendulumTask;
  const TaskId partner_leaf = robot_on_slider ? kPendulumTask : kSliderTask;
  c.assignment.robot_tasks = {robot_leaf, kBallTask};
  c.assignment.human_tasks = {partner_leaf, kBallTask};

  auto stage = [&](TaskSet robot, bool partner, TaskSet partner_tasks, bool first) {
    return StageConfig{std::move(robot), partner, std::move(partner_tasks), config.convergence,
                       first ? config.first_stage_epsilon : config.later_stage_epsilon};
  };

  switch (c.category) {
    case Category::LearnTaskFirst:
      // The robot first trains alone on what its own action can achieve:
      // the slider alone cannot balance the ball, the pendulum can.
      c.stages.push_back(robot_on_slider ? stage({kSliderTask}, false, {}, true)
                                         : stage({kPendulumTask, kBallTask}, false, {}, true));
      c.stages.push_back(stage({robot_leaf, kBallTask}, true, {partner_leaf, kBallTask}, false));
      break;
    case Category::LearnHumanFirst:
      c.stages.push_back(stage({robot_leaf}, true, {partner_leaf}, true));
      c.stages.push_back(stage({robot_leaf, kBallTask}, true, {partner_leaf, kBallTask}, false));
      break;
    case Category::LearnTogether:
      c.stages.push_back(stage({robot_leaf, kBallTask}, true, {partner_leaf, kBallTask}, true));
      break;
  }
  return c;
}

bool convergence_check(std::span<const double> history, const ConvergenceCriterion& criterion,
                       double max_episode_reward) {
  const auto window = static_cast<std::size_t>(criterion.window);
  if (history.size() < window || window == 0) return false;
  const double sum = std::accumulate(history.end() - static_cast<std::ptrdiff_t>(window), history.end(), 0.0);
  return sum / static_cast<double>(window) >= criterion.threshold * max_episode_reward;
}

namespace {

struct EpisodeOutcome {
  double reward = 0.0;
  bool valid = true;
  std::vector<EnvState> states;
  std::vector<TraceRow> trace;
};

struct EpisodeSettings {
  int stage = 0;
  int episode = 0;
  int steps = 0;
  double epsilon = 0.0;
  bool train = false;
  bool keep_states = false;
  std::uint64_t reset_seed = 0;
};

// One rollout: observe, act, let the partner act, step, reward, and (when
// training) store the transition and update.
EpisodeOutcome run_episode(const TrainingCase& tc, const StageConfig& stage, DqnAgent* agent,
                           const QNetwork& policy, Partner& partner, const ExperimentConfig& config,
                           const DecompositionTree& tree, std::mt19937_64& rng, const EpisodeSettings& s,
                           const StageHooks* hooks) {
  const ActionSet actions{tc.robot_channel, config.action_levels};
  const ObservationScale scale = config.observation_scale();
  const TaskSet partner_tasks = stage.partner_present ? stage.partner_tasks : TaskSet{};

  EpisodeOutcome out;
  EnvState state = reset(config.physics, config.init, s.reset_seed);
  partner.begin_episode(rng);
  double partner_prev = 0.0;
  if (s.keep_states) out.states.reserve(static_cast<std::size_t>(s.steps));

  for (int k = 0; k < s.steps; ++k) {
    const Features features = to_features(observe(state, partner_prev), scale);
    const int action = agent ? agent->select_action(features, s.epsilon)
                             : greedy_action(forward(policy, features));
    const double partner_now = stage.partner_present ? partner.act(state, partner_tasks, rng) : 0.0;

    ControlInput u = actions.input(action, config.physics);
    const ControlInput p = partner_input(tc.partner_channel, partner_now, config.physics);
    u.slider_force += p.slider_force;
    u.pendulum_torque += p.pendulum_torque;
    const EnvState next = step(state, u, config.physics);

    const Observation next_obs = observe(next, partner_now);
    const double reward = total_reward(next_obs, tc.assignment, Member::Robot, stage.robot_tasks, tree);
    out.reward += reward;

    if (agent && s.train) {
      agent->remember({features, action, reward, to_features(next_obs, scale)});
      agent->train_step();
    }
    if (s.keep_states) {
      out.states.push_back(next);
      out.trace.push_back({next.t, next.slider_pos, next.pendulum_angle, next.ball_pos,
                           config.action_levels[static_cast<std::size_t>(action)], partner_now});
    }
    if (hooks && hooks->after_step) {
      const double h = partner_tasks.empty()
                           ? 0.0
                           : human_reward(next_obs, tc.assignment, partner_tasks, tree);
      StepEvent ev{s.stage, s.episode, k, &next, config.action_levels[static_cast<std::size_t>(action)],
                   partner_now, reward, h};
      if (!hooks->after_step(ev)) {
        out.valid = false;
        break;
      }
    }
    state = next;
    partner_prev = partner_now;
  }
  partner.end_episode();
  return out;
}

}  // namespace

StageResult run_stage(const TrainingCase& tc, int stage_index, DqnAgent& agent, Partner& partner,
                      const ExperimentConfig& config, std::mt19937_64& rng, const StageHooks& hooks) {
  const StageConfig& stage = tc.stages.at(static_cast<std::size_t>(stage_index));
  if (agent.action_count() != static_cast<int>(config.action_levels.size()))
    throw ConfigError("agent action count does not match the action set");
  if (stage.partner_present && partner.channel() != tc.partner_channel)
    throw ConfigError("partner drives the wrong channel for this case");
  const DecompositionTree tree = config.reward_tree();
  AbsentPartner absent(tc.partner_channel);
  Partner& actor = stage.partner_present ? partner : absent;

  StageResult result;
  const int steps = config.steps_per_episode();
  result.max_episode_reward = steps * max_step_reward(tc.assignment, Member::Robot, stage.robot_tasks, tree);

  std::vector<double> history;
  int attempt = 0;
  while (result.valid_episodes < stage.convergence.patience) {
    if (hooks.before_episode && !hooks.before_episode(stage_index, attempt)) break;
    EpisodeSettings settings;
    settings.stage = stage_index;
    settings.episode = attempt;
    settings.steps = steps;
    settings.epsilon = stage.epsilon.at(result.valid_episodes);
    settings.train = true;
    settings.reset_seed = rng();
    const EpisodeOutcome outcome =
        run_episode(tc, stage, &agent, agent.online(), actor, config, tree, rng, settings, &hooks);

    EpisodeRecord record{stage_index, attempt, outcome.reward, settings.epsilon, stage.partner_present,
                         outcome.valid};
    result.episodes.push_back(record);
    ++attempt;
    if (hooks.after_episode) hooks.after_episode(record);
    if (!outcome.valid) continue;
    ++result.valid_episodes;
    history.push_back(outcome.reward);
    if (convergence_check(history, stage.convergence, result.max_episode_reward)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

ErrorTriple errors_from_trajectory(std::span<const EnvState> states) {
  ErrorTriple e;
  if (states.empty()) return e;
  for (const auto& s : states) {
    e.translation += std::abs(s.slider_pos);
    e.rotation += std::abs(s.pendulum_angle);
    e.ball += std::abs(s.ball_pos);
  }
  const double n = static_cast<double>(states.size());
  e.translation /= n;
  e.rotation /= n;
  e.ball /= n;
  e.total = e.translation + e.rotation + e.ball;
  return e;
}

EvaluationResult evaluate_policy(const QNetwork& net, Partner& partner, const TrainingCase& tc,
                                 const ExperimentConfig& config, std::span<const std::uint64_t> seeds,
                                 double duration) {
  EvaluationResult result;
  if (seeds.empty()) return result;
  const StageConfig& final_stage = tc.stages.back();
  const DecompositionTree tree = config.reward_tree();
  AbsentPartner absent(tc.partner_channel);
  Partner& actor = final_stage.partner_present ? partner : absent;

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    std::mt19937_64 rng(seeds[i]);
    EpisodeSettings settings;
    settings.steps = static_cast<int>(std::lround(duration / config.physics.dt));
    settings.keep_states = true;
    settings.reset_seed = seeds[i];
    EpisodeOutcome outcome =
        run_episode(tc, final_stage, nullptr, net, actor, config, tree, rng, settings, nullptr);
    const ErrorTriple e = errors_from_trajectory(outcome.states);
    result.errors.translation += e.translation;
    result.errors.rotation += e.rotation;
    result.errors.ball += e.ball;
    if (i == 0) result.trace = std::move(outcome.trace);
  }
  const double n = static_cast<double>(seeds.size());
  result.errors.translation /= n;
  result.errors.rotation /= n;
  result.errors.ball /= n;
  result.errors.total = result.errors.translation + result.errors.rotation + result.errors.ball;
  return result;
}

PartnerFactory surrogate_factory(const std::string& profile, const ExperimentConfig& config) {
  if (profile == kMixedProfile) {
    const SkillProfile slider = find_profile(config.profiles, "skilled_translation");
    const SkillProfile pendulum = find_profile(config.profiles, "weak_rotation");
    return [slider, pendulum](Channel channel) -> std::unique_ptr<Partner> {
      const SkillProfile& skill = channel == Channel::SliderForce ? slider : pendulum;
      return std::make_unique<SurrogatePartner>(make_surrogate(skill, channel));
    };
  }
  const SkillProfile skill = find_profile(config.profiles, profile);
  return [skill](Channel channel) -> std::unique_ptr<Partner> {
    return std::make_unique<SurrogatePartner>(make_surrogate(skill, channel));
  };
}

SeedRun run_seed(const TrainingCase& tc, std::uint64_t seed, const PartnerFactory& partners,
                 const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  tc.validate(config.reward_tree());
  SeedRun run;
  run.seed = seed;
  DqnAgent agent(config.agent, static_cast<int>(config.action_levels.size()), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::unique_ptr<Partner> partner = partners(tc.partner_channel);

  for (int k = 0; k < static_cast<int>(tc.stages.size()); ++k) {
    // Transitions were rewarded under the previous stage's function.
    agent.clear_replay();
    StageResult stage = run_stage(tc, k, agent, *partner, config, rng);
    run.episodes.insert(run.episodes.end(), stage.episodes.begin(), stage.episodes.end());
    run.stage_episodes.push_back(stage.valid_episodes);
    run.stage_converged.push_back(stage.converged);
  }

  std::vector<std::uint64_t> eval_seeds;
  for (int i = 0; i < config.curriculum.eval_episodes; ++i)
    eval_seeds.push_back(seed * 1000003ULL + 7919ULL * static_cast<std::uint64_t>(i + 1));
  std::unique_ptr<Partner> evaluator = partners(tc.partner_channel);
  EvaluationResult eval =
      evaluate_policy(agent.online(), *evaluator, tc, config, eval_seeds, config.curriculum.episode_duration);
  run.errors = eval.errors;
  run.trace = std::move(eval.trace);
  run.weights = agent.online();
  run.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

CaseMetrics aggregate_metrics(int case_id, std::span<const SeedRun> runs, const std::vector<StageConfig>& stages) {
  CaseMetrics m;
  m.case_id = case_id;
  m.seeds = static_cast<int>(runs.size());
  m.converged = !runs.empty();
  for (const auto& run : runs) {
    for (std::size_t k = 0; k < run.stage_episodes.size(); ++k) {
      m.total_episodes += run.stage_episodes[k];
      if (stages.at(k).partner_present) m.human_involved_episodes += run.stage_episodes[k];
      m.converged = m.converged && run.stage_converged[k];
    }
    m.error_translation += run.errors.translation;
    m.error_rotation += run.errors.rotation;
    m.error_ball += run.errors.ball;
    m.wall_time += run.wall_time;
  }
  if (!runs.empty()) {
    const double n = static_cast<double>(runs.size());
    m.error_translation /= n;
    m.error_rotation /= n;
    m.error_ball /= n;
  }
  m.error_total = m.error_translation + m.error_rotation + m.error_ball;
  m.involvement_percentage =
      m.total_episodes > 0 ? static_cast<double>(m.human_involved_episodes) / static_cast<double>(m.total_episodes)
                           : 0.0;
  return m;
}

CaseRun run_case(int case_id, std::span<const std::uint64_t> seeds, const std::string& partner_profile,
                 const ExperimentConfig& config) {
  CaseRun out;
  out.training_case = build_case(case_id, config.curriculum);
  out.partner = partner_profile;
  const PartnerFactory partners = surrogate_factory(partner_profile, config);
  for (std::uint64_t seed : seeds) out.runs.push_back(run_seed(out.training_case, seed, partners, config));
  out.metrics = aggregate_metrics(case_id, out.runs, out.training_case.stages);
  return out;
}

std::map<Category, FactorScores> three_factor_summary(const std::map<int, CaseMetrics>& metrics,
                                                      double episode_duration) {
  std::map<Category, FactorScores> scores;
  for (int id = 1; id <= 6; ++id) {
    auto it = metrics.find(id);
    if (it == metrics.end()) throw ConfigError("three-factor summary needs case " + std::to_string(id));
    const CaseMetrics& m = it->second;
    FactorScores& s = scores[build_case(id).category];
    s.raw_involvement += 0.5 * m.mean_human_involved();
    s.raw_time += 0.5 * m.mean_total_episodes() * episode_duration;
    s.raw_performance += 0.5 / (1.0 + m.error_total);
  }

  // Min-max to [0, 1] with larger = better; a flat axis maps to 0.5.
  auto normalize = [&](double FactorScores::*raw, double FactorScores::*axis, bool lower_is_better) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& [cat, s] : scores) {
      lo = std::min(lo, s.*raw);
      hi = std::max(hi, s.*raw);
    }
    for (auto& [cat, s] : scores) {
      if (hi - lo <= 0.0) {
        s.*axis = 0.5;
      } else {
        const double u = (s.*raw - lo) / (hi - lo);
        s.*axis = lower_is_better ? 1.0 - u : u;
      }
    }
  };
  normalize(&FactorScores::raw_involvement, &FactorScores::involvement, true);
  normalize(&FactorScores::raw_time, &FactorScores::time, true);
  normalize(&FactorScores::raw_performance, &FactorScores::performance, false);
  return scores;
}

}  // namespace hrc
