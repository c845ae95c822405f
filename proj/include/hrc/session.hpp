#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hrc/curriculum.hpp"
#include "hrc/session_protocol.hpp"

namespace hrc {

struct SessionConfig {
  int case_id = 1;
  int first_stage = 0;
  double pacing = 0.2;  // wall-clock seconds per control step
  std::uint16_t port = 8765;
  std::filesystem::path record_path;  // empty: no recording
  std::uint64_t seed = 1;

  /// Pacing may never run faster than simulated time.
  void validate(const ExperimentConfig& config) const;
};

/// Single-slot store for the operator's axis. Writers overwrite; the
/// simulation reads whatever is newest, so a burst of messages between two
/// control steps collapses into one.
class ActionMailbox {
 public:
  /// Clamps to [-1, 1]; non-finite values are ignored.
  void post(double axis_value);
  double latest() const;
  std::uint64_t posts() const;
  /// Back to 0, as for a freshly connected operator.
  void reset();

 private:
  mutable std::mutex mutex_;
  double value_ = 0.0;
  std::uint64_t posts_ = 0;
};

/// Append-only, line-delimited session log. The first line is a header;
/// every further line is one record with a server timestamp. Thread safe.
/// Write failures throw IoError in the calling thread and are remembered so
/// the simulation loop can abort on failures seen by other threads.
class SessionRecorder {
 public:
  SessionRecorder(const std::filesystem::path& path, const nlohmann::json& header);

  void message(std::string_view dir, const SessionMessage& m);
  void applied(int stage, int episode, int step, double value, bool validation);
  void event(const nlohmann::json& e);
  void rejected(std::string_view raw, std::string_view error);

  double elapsed() const;
  /// Rethrows a failure recorded by any thread.
  void check() const;

 private:
  void write(nlohmann::json record);

  mutable std::mutex mutex_;
  std::ofstream out_;
  std::filesystem::path path_;
  std::chrono::steady_clock::time_point start_;
  std::string failure_;
};

/// Transport between the simulation loop and the single operator.
class SessionLink {
 public:
  virtual ~SessionLink() = default;
  virtual bool connected() const = 0;
  /// Blocks until an operator is connected (true) or `stop` is set (false).
  virtual bool wait_for_operator(const std::atomic<bool>& stop) = 0;
  /// Queues a message for the operator; never blocks on the network.
  virtual void send(const SessionMessage& m) = 0;
  virtual ActionMailbox& mailbox() = 0;
};

/// Hooks the session loop calls; the live session binds them to a link,
/// replay binds them to a recorded log.
struct SessionCallbacks {
  std::function<void(int stage)> stage_started;
  /// Partner-present episodes only. Returning false stops the session.
  std::function<bool(int stage, int episode)> before_episode;
  /// Returning false aborts the episode (it is kept but marked invalid).
  std::function<bool(const StepEvent&)> after_step;
  std::function<void(const EpisodeRecord&)> after_episode;
  /// Before the validation rollouts. Returning false skips validation.
  std::function<bool()> before_validation;
};

struct SessionResult {
  SeedRun run;
  CaseMetrics metrics;
  bool completed = false;  // all stages ran and the policy was validated
};

/// Trains `config.case_id` from `first_stage` on with `partner` standing in
/// for the operator, then validates. Partner-free stages run unpaced.
SessionResult run_session_loop(const SessionConfig& session, const ExperimentConfig& config, Partner& partner,
                               const SessionCallbacks& callbacks);

/// Partner fed by a SessionLink: each call broadcasts the current state,
/// waits out the pacing interval and applies the newest operator axis.
class RemotePartner final : public Partner {
 public:
  RemotePartner(const TrainingCase& training_case, const ExperimentConfig& config, double pacing,
                SessionLink& link, SessionRecorder* recorder);

  PartnerKind kind() const override { return PartnerKind::Remote; }
  Channel channel() const override { return training_case_.partner_channel; }
  void begin_episode(std::mt19937_64& rng) override;
  double act(const EnvState& state, const TaskSet& own_tasks, std::mt19937_64& rng) override;

  /// Labels for the following broadcasts.
  void set_episode(int stage, int episode);
  void set_validation(bool on);

 private:
  TrainingCase training_case_;
  DecompositionTree tree_;
  std::chrono::steady_clock::duration pacing_;
  SessionLink& link_;
  SessionRecorder* recorder_;
  std::chrono::steady_clock::time_point tick_;
  int stage_ = 0;
  int episode_ = 0;
  int step_ = 0;
  bool validation_ = false;
  int validation_episode_ = -1;
};

/// Runs a live session over `link` until the curriculum finishes or `stop`
/// is set. Records everything when `recorder` is given.
SessionResult run_live_session(const SessionConfig& session, const ExperimentConfig& config, SessionLink& link,
                               SessionRecorder* recorder, const std::atomic<bool>& stop);

inline constexpr const char* kSessionLogFormat = "hrc-session";

nlohmann::json session_header(const SessionConfig& session, const ExperimentConfig& config);

struct SessionLog {
  nlohmann::json header;
  std::vector<nlohmann::json> records;

  SessionConfig session() const;
  ExperimentConfig config() const;
  /// Consumed operator actions, in order.
  std::vector<double> applied_actions() const;
  /// Episode rewards from the broadcast episode boundaries, in order.
  std::vector<double> episode_rewards() const;
  /// Messages sent in direction `dir` ("out" or "in").
  std::vector<SessionMessage> messages(std::string_view dir) const;
  /// Server timestamps of the broadcast state messages.
  std::vector<double> state_times() const;
};

SessionLog read_session_log(std::istream& in);
SessionLog load_session_log(const std::filesystem::path& path);

/// Re-runs a recorded session offline with the recorded operator actions.
SessionResult replay_session(const SessionLog& log);

}  // namespace hrc
