#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <nlohmann/json_fwd.hpp>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hrc/dqn_agent.hpp"
#include "hrc/env_dynamics.hpp"
#include "hrc/hierarchical_reward.hpp"
#include "hrc/partner_models.hpp"

namespace hrc {

enum class Category { LearnTaskFirst, LearnHumanFirst, LearnTogether };

std::string to_string(Category c);

/// Stage goal: the mean of the last `window` episode rewards reaches
/// `threshold` of the stage's maximum attainable episode reward. A stage
/// gives up after `patience` episodes.
struct ConvergenceCriterion {
  int window = 3;
  double threshold = 0.9;
  int patience = 60;

  void validate() const;
};

struct StageConfig {
  TaskSet robot_tasks;
  bool partner_present = false;
  TaskSet partner_tasks;
  ConvergenceCriterion convergence;
  EpsilonSchedule epsilon;
};

struct TrainingCase {
  int id = 1;
  Category category = Category::LearnTaskFirst;
  Channel robot_channel = Channel::SliderForce;
  Channel partner_channel = Channel::PendulumTorque;
  RoleAssignment assignment;
  std::vector<StageConfig> stages;

  void validate(const DecompositionTree& tree) const;
};

struct CurriculumConfig {
  ConvergenceCriterion convergence;
  EpsilonSchedule first_stage_epsilon{0.9, 0.05, 0.95};
  EpsilonSchedule later_stage_epsilon{0.3, 0.05, 0.95};
  double episode_duration = 40.0;  // s
  int eval_episodes = 3;
};

/// Everything a rollout needs besides the learner and the partner.
struct ExperimentConfig {
  PhysicsParams physics;
  InitRanges init;
  double angle_range = 0.7853981633974483;  // rad, pendulum reward scale
  std::vector<double> action_levels{-1.0, -0.5, 0.0, 0.5, 1.0};
  AgentConfig agent;
  CurriculumConfig curriculum;
  std::map<std::string, SkillProfile> profiles = default_profiles();
  /// Reward tree; built from the physics when empty.
  std::optional<DecompositionTree> tree;

  static ExperimentConfig defaults();
  void validate() const;

  DecompositionTree reward_tree() const;
  ObservationScale observation_scale() const;
  int steps_per_episode() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Overlays the keys present in `j` onto `c`.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// The six staged curricula. Throws ConfigError for ids outside 1..6.
TrainingCase build_case(int id, const CurriculumConfig& config = {});

struct EpisodeRecord {
  int stage = 0;
  int episode = 0;  // within the stage
  double reward = 0.0;
  double epsilon = 0.0;
  bool partner_present = false;
  bool valid = true;
};

struct StepEvent {
  int stage = 0;
  int episode = 0;
  int step = 0;
  const EnvState* state = nullptr;  // after the step
  double robot_action = 0.0;        // normalized level
  double partner_action = 0.0;
  double robot_reward = 0.0;
  double human_reward = 0.0;
};

/// Optional callbacks used by the live session to pace and gate training.
struct StageHooks {
  /// Called before each episode; returning false ends the stage.
  std::function<bool(int stage, int episode)> before_episode;
  /// Returning false aborts the episode, which is then marked invalid.
  std::function<bool(const StepEvent&)> after_step;
  std::function<void(const EpisodeRecord&)> after_episode;
};

struct StageResult {
  std::vector<EpisodeRecord> episodes;  // includes invalid ones
  int valid_episodes = 0;
  bool converged = false;
  double max_episode_reward = 0.0;
};

bool convergence_check(std::span<const double> history, const ConvergenceCriterion& criterion,
                       double max_episode_reward);

StageResult run_stage(const TrainingCase& training_case, int stage_index, DqnAgent& agent,
                      Partner& partner, const ExperimentConfig& config, std::mt19937_64& rng,
                      const StageHooks& hooks = {});

struct ErrorTriple {
  double translation = 0.0;  // m
  double rotation = 0.0;     // rad
  double ball = 0.0;         // m
  double total = 0.0;

  bool operator==(const ErrorTriple&) const = default;
};

/// Time-averaged absolute deviations of the given states.
ErrorTriple errors_from_trajectory(std::span<const EnvState> states);

struct TraceRow {
  double t = 0.0;
  double slider_pos = 0.0;
  double pendulum_angle = 0.0;
  double ball_pos = 0.0;
  double robot_action = 0.0;
  double partner_action = 0.0;
};

struct EvaluationResult {
  ErrorTriple errors;             // averaged across seeds
  std::vector<TraceRow> trace;    // first seed
};

/// Greedy rollouts of `duration` seconds from each seed, with the partner on
/// its final-stage tasks.
EvaluationResult evaluate_policy(const QNetwork& net, Partner& partner, const TrainingCase& training_case,
                                 const ExperimentConfig& config, std::span<const std::uint64_t> seeds,
                                 double duration = 40.0);

struct CaseMetrics {
  int case_id = 0;
  int seeds = 0;
  long human_involved_episodes = 0;  // summed over seeds
  long total_episodes = 0;           // summed over seeds
  double involvement_percentage = 0.0;  // fraction: human_involved / total
  double error_translation = 0.0;    // seed means
  double error_rotation = 0.0;
  double error_ball = 0.0;
  double error_total = 0.0;
  bool converged = false;            // every stage of every seed
  double wall_time = 0.0;            // s, summed over seeds

  double mean_human_involved() const { return seeds ? double(human_involved_episodes) / seeds : 0.0; }
  double mean_total_episodes() const { return seeds ? double(total_episodes) / seeds : 0.0; }
  bool operator==(const CaseMetrics&) const = default;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<int> stage_episodes;
  std::vector<bool> stage_converged;
  ErrorTriple errors;
  std::vector<TraceRow> trace;
  QNetwork weights;
  double wall_time = 0.0;
};

struct CaseRun {
  TrainingCase training_case;
  std::string partner;
  std::vector<SeedRun> runs;
  CaseMetrics metrics;
};

using PartnerFactory = std::function<std::unique_ptr<Partner>(Channel)>;

/// Partner profile that is skilled on the slider and weak on the pendulum.
inline constexpr const char* kMixedProfile = "mixed";

/// Surrogate partners built from a named profile in `config.profiles`, or
/// from kMixedProfile.
PartnerFactory surrogate_factory(const std::string& profile, const ExperimentConfig& config);

/// Trains one seed through every stage (weights carried over, replay cleared
/// between stages) and evaluates the final policy.
SeedRun run_seed(const TrainingCase& training_case, std::uint64_t seed, const PartnerFactory& partners,
                 const ExperimentConfig& config);

CaseMetrics aggregate_metrics(int case_id, std::span<const SeedRun> runs,
                              const std::vector<StageConfig>& stages);

CaseRun run_case(int case_id, std::span<const std::uint64_t> seeds, const std::string& partner_profile,
                 const ExperimentConfig& config);

struct FactorScores {
  double involvement = 0.0;  // 1 = least human-involved training
  double time = 0.0;         // 1 = least total training time
  double performance = 0.0;  // 1 = best team performance
  // Raw category values before normalization.
  double raw_involvement = 0.0;
  double raw_time = 0.0;
  double raw_performance = 0.0;
};

/// Per-category scores on three min-max normalized axes where larger is
/// better. Needs metrics for all six cases.
std::map<Category, FactorScores> three_factor_summary(const std::map<int, CaseMetrics>& metrics,
                                                      double episode_duration = 40.0);

// ---- persistence ----

void to_json(nlohmann::json& j, const CaseMetrics& m);
void from_json(const nlohmann::json& j, CaseMetrics& m);
void to_json(nlohmann::json& j, const CaseRun& run);
void from_json(const nlohmann::json& j, CaseRun& run);

inline constexpr const char* kMetricsCsvHeader =
    "case,category,seeds,human_involved_episodes,total_episodes,involvement_percentage,"
    "error_translation,error_rotation,error_ball,error_total,converged,wall_time";
inline constexpr const char* kEpisodeCsvHeader = "seed,stage,episode,reward,epsilon,partner_present,valid";
inline constexpr const char* kTraceCsvHeader = "seed,t,C_x,P_z,B_y,robot_action,partner_action";

void write_metrics_csv(std::ostream& out, std::span<const CaseMetrics> metrics);
std::vector<CaseMetrics> read_metrics_csv(std::istream& in);

/// Writes per-case episode and action-trace CSVs, metrics.csv and, when all
/// six cases are present, three_factor.json.
void export_metrics(std::span<const CaseRun> runs, const std::filesystem::path& out_dir,
                    double episode_duration = 40.0);

void save_run(std::span<const CaseRun> runs, const ExperimentConfig& config,
              const std::filesystem::path& path);
std::vector<CaseRun> load_run(const std::filesystem::path& path, ExperimentConfig* config = nullptr);

}  // namespace hrc
