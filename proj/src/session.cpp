#include "hrc/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "hrc/error.hpp"

namespace hrc {

using nlohmann::json;

void SessionConfig::validate(const ExperimentConfig& config) const {
  if (case_id < 1 || case_id > 6) throw ConfigError("session case must be 1..6");
  const TrainingCase tc = build_case(case_id, config.curriculum);
  if (first_stage < 0 || first_stage >= static_cast<int>(tc.stages.size()))
    throw ConfigError("session stage out of range for case " + std::to_string(case_id));
  if (!(pacing >= config.physics.dt))
    throw ConfigError("session pacing must be >= dt (" + std::to_string(config.physics.dt) + " s)");
}

// ---- mailbox ----

void ActionMailbox::post(double axis_value) {
  if (!std::isfinite(axis_value)) return;
  std::lock_guard lock(mutex_);
  value_ = std::clamp(axis_value, -1.0, 1.0);
  ++posts_;
}

double ActionMailbox::latest() const {
  std::lock_guard lock(mutex_);
  return value_;
}

std::uint64_t ActionMailbox::posts() const {
  std::lock_guard lock(mutex_);
  return posts_;
}

void ActionMailbox::reset() {
  std::lock_guard lock(mutex_);
  value_ = 0.0;
}

// ---- recorder ----

SessionRecorder::SessionRecorder(const std::filesystem::path& path, const json& header)
    : out_(path, std::ios::out | std::ios::trunc), path_(path), start_(std::chrono::steady_clock::now()) {
  if (!out_) throw IoError("cannot open session record: " + path.string());
  out_ << header.dump() << '\n' << std::flush;
  if (!out_) throw IoError("write failed: " + path.string());
}

double SessionRecorder::elapsed() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void SessionRecorder::write(json record) {
  std::lock_guard lock(mutex_);
  if (!failure_.empty()) throw IoError(failure_);
  record["ts"] = elapsed();
  out_ << record.dump() << '\n' << std::flush;
  if (!out_) {
    failure_ = "write failed: " + path_.string();
    throw IoError(failure_);
  }
}

void SessionRecorder::message(std::string_view dir, const SessionMessage& m) {
  write({{"dir", dir}, {"msg", to_json_value(m)}});
}

void SessionRecorder::applied(int stage, int episode, int step, double value, bool validation) {
  write({{"dir", "applied"},
         {"stage", stage},
         {"episode", episode},
         {"step", step},
         {"value", value},
         {"validation", validation}});
}

void SessionRecorder::event(const json& e) { write({{"dir", "event"}, {"event", e}}); }

void SessionRecorder::rejected(std::string_view raw, std::string_view error) {
  write({{"dir", "rejected"}, {"raw", raw}, {"error", error}});
}

void SessionRecorder::check() const {
  std::lock_guard lock(mutex_);
  if (!failure_.empty()) throw IoError(failure_);
}

// ---- session loop ----

namespace {

std::vector<std::uint64_t> validation_seeds(std::uint64_t seed, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(seed * 1000003ULL + 7919ULL * static_cast<std::uint64_t>(i + 1));
  return seeds;
}

}  // namespace

SessionResult run_session_loop(const SessionConfig& session, const ExperimentConfig& config, Partner& partner,
                               const SessionCallbacks& cb) {
  const auto started = std::chrono::steady_clock::now();
  session.validate(config);
  const TrainingCase tc = build_case(session.case_id, config.curriculum);
  tc.validate(config.reward_tree());

  SessionResult result;
  SeedRun& run = result.run;
  run.seed = session.seed;
  DqnAgent agent(config.agent, static_cast<int>(config.action_levels.size()), session.seed);
  std::mt19937_64 rng(session.seed ^ 0x9e3779b97f4a7c15ULL);

  bool stopped = false;
  std::vector<StageConfig> stages_run;
  for (int k = session.first_stage; k < static_cast<int>(tc.stages.size()) && !stopped; ++k) {
    const bool with_partner = tc.stages[static_cast<std::size_t>(k)].partner_present;
    agent.clear_replay();
    if (cb.stage_started) cb.stage_started(k);

    StageHooks hooks;
    if (with_partner) {
      hooks.before_episode = [&](int stage, int episode) {
        if (cb.before_episode && !cb.before_episode(stage, episode)) {
          stopped = true;
          return false;
        }
        return true;
      };
      hooks.after_step = cb.after_step;
    }
    hooks.after_episode = cb.after_episode;

    StageResult stage = run_stage(tc, k, agent, partner, config, rng, hooks);
    run.episodes.insert(run.episodes.end(), stage.episodes.begin(), stage.episodes.end());
    run.stage_episodes.push_back(stage.valid_episodes);
    run.stage_converged.push_back(stage.converged);
    stages_run.push_back(tc.stages[static_cast<std::size_t>(k)]);
  }

  run.weights = agent.online();
  if (!stopped && (!cb.before_validation || cb.before_validation())) {
    const auto seeds = validation_seeds(session.seed, config.curriculum.eval_episodes);
    EvaluationResult eval =
        evaluate_policy(agent.online(), partner, tc, config, seeds, config.curriculum.episode_duration);
    run.errors = eval.errors;
    run.trace = std::move(eval.trace);
    result.completed = true;
  }
  run.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.metrics = aggregate_metrics(session.case_id, std::span(&run, 1), stages_run);
  return result;
}

// ---- remote partner ----

RemotePartner::RemotePartner(const TrainingCase& tc, const ExperimentConfig& config, double pacing,
                             SessionLink& link, SessionRecorder* recorder)
    : training_case_(tc),
      tree_(config.reward_tree()),
      pacing_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(pacing))),
      link_(link),
      recorder_(recorder) {}

void RemotePartner::set_episode(int stage, int episode) {
  stage_ = stage;
  episode_ = episode;
}

void RemotePartner::set_validation(bool on) {
  validation_ = on;
  validation_episode_ = -1;
}

void RemotePartner::begin_episode(std::mt19937_64&) {
  step_ = 0;
  if (validation_) episode_ = ++validation_episode_;
  tick_ = std::chrono::steady_clock::now();
}

double RemotePartner::act(const EnvState& s, const TaskSet& own_tasks, std::mt19937_64&) {
  const StageConfig& stage = training_case_.stages.at(static_cast<std::size_t>(stage_));
  const Observation obs = observe(s, 0.0);
  msg::State m;
  m.t = s.t;
  m.slider_pos = s.slider_pos;
  m.pendulum_angle = s.pendulum_angle;
  m.ball_pos = s.ball_pos;
  m.slider_vel = s.slider_vel;
  m.pendulum_rate = s.pendulum_rate;
  m.ball_vel = s.ball_vel;
  m.stage = stage_;
  m.episode = episode_;
  m.step = step_;
  m.reward_r = total_reward(obs, training_case_.assignment, Member::Robot, stage.robot_tasks, tree_);
  m.reward_h = own_tasks.empty() ? 0.0 : human_reward(obs, training_case_.assignment, own_tasks, tree_);
  m.validation = validation_;
  if (recorder_) recorder_->message("out", m);
  link_.send(m);

  // Zero-order hold: whatever the operator sent last before the tick.
  tick_ += pacing_;
  std::this_thread::sleep_until(tick_);
  const double value = link_.mailbox().latest();
  if (recorder_) recorder_->applied(stage_, episode_, step_, value, validation_);
  ++step_;
  return value;
}

SessionResult run_live_session(const SessionConfig& session, const ExperimentConfig& config, SessionLink& link,
                               SessionRecorder* recorder, const std::atomic<bool>& stop) {
  session.validate(config);
  const TrainingCase tc = build_case(session.case_id, config.curriculum);
  RemotePartner partner(tc, config, session.pacing, link, recorder);

  auto send = [&](const SessionMessage& m) {
    if (recorder) recorder->message("out", m);
    link.send(m);
  };

  SessionCallbacks cb;
  // A stage is announced once an operator is there to hear it.
  int announced = -1;
  auto announce = [&](int stage) {
    if (announced == stage || !link.connected()) return;
    send(msg::StageChange{stage});
    announced = stage;
  };
  cb.stage_started = announce;
  cb.before_episode = [&](int stage, int episode) {
    if (recorder) recorder->check();
    if (stop || !link.wait_for_operator(stop)) {
      if (recorder) recorder->event({{"type", "stop"}, {"stage", stage}, {"episode", episode}});
      return false;
    }
    announce(stage);
    partner.set_episode(stage, episode);
    return true;
  };
  cb.after_step = [&](const StepEvent& ev) {
    if (link.connected()) return true;
    // The operator left mid-episode: this episode cannot count.
    if (recorder) recorder->event({{"type", "abort"}, {"stage", ev.stage}, {"episode", ev.episode}, {"step", ev.step}});
    return false;
  };
  cb.after_episode = [&](const EpisodeRecord& r) {
    send(msg::EpisodeBoundary{r.stage, r.episode, r.reward, r.valid});
  };
  cb.before_validation = [&]() {
    if (stop || !link.wait_for_operator(stop)) {
      if (recorder) recorder->event({{"type", "skip_validation"}});
      return false;
    }
    partner.set_episode(static_cast<int>(tc.stages.size()) - 1, 0);
    partner.set_validation(true);
    return true;
  };

  SessionResult result = run_session_loop(session, config, partner, cb);
  send(msg::Bye{result.completed ? "complete" : "stopped"});
  if (recorder) recorder->check();
  return result;
}

// ---- log reading and replay ----

json session_header(const SessionConfig& session, const ExperimentConfig& config) {
  return {{"format", kSessionLogFormat},
          {"version", 1},
          {"protocol", kProtocolVersion},
          {"case_id", session.case_id},
          {"first_stage", session.first_stage},
          {"seed", session.seed},
          {"pacing", session.pacing},
          {"config", config}};
}

SessionLog read_session_log(std::istream& in) {
  SessionLog log;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("session log is empty");
  try {
    log.header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("session log header: ") + e.what());
  }
  if (log.header.value("format", "") != kSessionLogFormat) throw FormatError("not a session log (format field)");
  if (log.header.value("version", 0) != 1) throw FormatError("unsupported session log version");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      log.records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("session log line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!log.records.back().contains("dir"))
      throw FormatError("session log line " + std::to_string(line_no) + ": missing 'dir'");
  }
  return log;
}

SessionLog load_session_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open session log: " + path.string());
  return read_session_log(in);
}

SessionConfig SessionLog::session() const {
  SessionConfig s;
  try {
    s.case_id = header.at("case_id").get<int>();
    s.first_stage = header.at("first_stage").get<int>();
    s.seed = header.at("seed").get<std::uint64_t>();
    s.pacing = header.at("pacing").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("session log header: ") + e.what());
  }
  return s;
}

ExperimentConfig SessionLog::config() const {
  ExperimentConfig c = ExperimentConfig::defaults();
  if (!header.contains("config")) throw FormatError("session log header has no config");
  from_json(header.at("config"), c);
  return c;
}

std::vector<double> SessionLog::applied_actions() const {
  std::vector<double> out;
  for (const auto& r : records)
    if (r.at("dir") == "applied") out.push_back(r.at("value").get<double>());
  return out;
}

std::vector<SessionMessage> SessionLog::messages(std::string_view dir) const {
  std::vector<SessionMessage> out;
  for (const auto& r : records)
    if (r.at("dir") == dir) out.push_back(message_from_json(r.at("msg")));
  return out;
}

std::vector<double> SessionLog::episode_rewards() const {
  std::vector<double> out;
  for (const auto& m : messages("out"))
    if (const auto* b = std::get_if<msg::EpisodeBoundary>(&m)) out.push_back(b->episode_reward);
  return out;
}

std::vector<double> SessionLog::state_times() const {
  std::vector<double> out;
  for (const auto& r : records)
    if (r.at("dir") == "out" && r.at("msg").value("type", "") == "state") out.push_back(r.at("ts").get<double>());
  return out;
}

SessionResult replay_session(const SessionLog& log) {
  const SessionConfig session = log.session();
  const ExperimentConfig config = log.config();
  const TrainingCase tc = build_case(session.case_id, config.curriculum);
  ScriptedPartner partner(tc.partner_channel, log.applied_actions());

  struct Mark {
    int stage, episode, step;
  };
  std::vector<Mark> aborts;
  std::optional<Mark> stop;
  bool skip_validation = false;
  for (const auto& r : log.records) {
    if (r.at("dir") != "event") continue;
    const json& e = r.at("event");
    const std::string type = e.value("type", "");
    if (type == "abort") aborts.push_back({e.at("stage"), e.at("episode"), e.at("step")});
    if (type == "stop") stop = Mark{e.at("stage"), e.at("episode"), 0};
    if (type == "skip_validation") skip_validation = true;
  }

  SessionCallbacks cb;
  cb.before_episode = [&](int stage, int episode) {
    return !(stop && stop->stage == stage && stop->episode == episode);
  };
  cb.after_step = [&](const StepEvent& ev) {
    return std::none_of(aborts.begin(), aborts.end(), [&](const Mark& m) {
      return m.stage == ev.stage && m.episode == ev.episode && m.step == ev.step;
    });
  };
  cb.before_validation = [&]() { return !skip_validation; };
  return run_session_loop(session, config, partner, cb);
}

}  // namespace hrc
