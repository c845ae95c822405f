// Persistence for curriculum runs: experiment config documents, run records
// and the exported CSV/JSON result files.

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hrc/curriculum.hpp"
#include "hrc/error.hpp"
#include "hrc/numeric_text.hpp"

namespace hrc {

using nlohmann::json;

namespace {

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

Interval interval_from(const json& j, Interval fallback) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("init range must be [lo, hi]");
  fallback.lo = j[0].get<double>();
  fallback.hi = j[1].get<double>();
  return fallback;
}

json epsilon_json(const EpsilonSchedule& e) { return {{"start", e.start}, {"end", e.end}, {"decay", e.decay}}; }

EpsilonSchedule epsilon_from(const json& j, EpsilonSchedule e) {
  e.start = j.value("start", e.start);
  e.end = j.value("end", e.end);
  e.decay = j.value("decay", e.decay);
  return e;
}

json convergence_json(const ConvergenceCriterion& c) {
  return {{"window", c.window}, {"threshold", c.threshold}, {"patience", c.patience}};
}

ConvergenceCriterion convergence_from(const json& j, ConvergenceCriterion c) {
  c.window = j.value("window", c.window);
  c.threshold = j.value("threshold", c.threshold);
  c.patience = j.value("patience", c.patience);
  return c;
}

const std::pair<const char*, Interval InitRanges::*> kInitFields[] = {
    {"slider_pos", &InitRanges::slider_pos},         {"slider_vel", &InitRanges::slider_vel},
    {"pendulum_angle", &InitRanges::pendulum_angle}, {"pendulum_rate", &InitRanges::pendulum_rate},
    {"ball_pos", &InitRanges::ball_pos},             {"ball_vel", &InitRanges::ball_vel},
};

json physics_json(const PhysicsParams& p) {
  std::ostringstream kv;
  write_physics_params(kv, p);
  json j = json::object();
  std::istringstream in(kv.str());
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = parse_double(line.substr(eq + 3), line.substr(0, eq));
  }
  return j;
}

PhysicsParams physics_from(const json& j, const PhysicsParams& base) {
  // Reuse the key-value parser so both formats accept exactly the same keys.
  std::ostringstream kv;
  write_physics_params(kv, base);
  for (const auto& [key, value] : j.items()) kv << key << " = " << format_double(value.get<double>()) << '\n';
  std::istringstream in(kv.str());
  return parse_physics_params(in, "physics");
}

}  // namespace

void to_json(json& j, const ExperimentConfig& c) {
  json init = json::object();
  for (const auto& [name, field] : kInitFields) init[name] = interval_json(c.init.*field);
  json profiles = json::object();
  for (const auto& [name, p] : c.profiles) profiles[name] = p;
  j = {{"physics", physics_json(c.physics)},
       {"init_ranges", init},
       {"angle_range", c.angle_range},
       {"action_levels", c.action_levels},
       {"agent",
        {{"gamma", c.agent.gamma},
         {"learning_rate", c.agent.learning_rate},
         {"epsilon", epsilon_json(c.agent.epsilon)},
         {"batch_size", c.agent.batch_size},
         {"target_sync_period", c.agent.target_sync_period},
         {"replay_capacity", c.agent.replay_capacity},
         {"hidden_sizes", c.agent.hidden_sizes}}},
       {"curriculum",
        {{"convergence", convergence_json(c.curriculum.convergence)},
         {"first_stage_epsilon", epsilon_json(c.curriculum.first_stage_epsilon)},
         {"later_stage_epsilon", epsilon_json(c.curriculum.later_stage_epsilon)},
         {"episode_duration", c.curriculum.episode_duration},
         {"eval_episodes", c.curriculum.eval_episodes}}},
       {"profiles", profiles},
       {"reward_tree", c.reward_tree()}};
}

void from_json(const json& j, ExperimentConfig& c) {
  try {
    if (j.contains("physics")) c.physics = physics_from(j.at("physics"), c.physics);
    if (j.contains("init_ranges"))
      for (const auto& [name, field] : kInitFields)
        if (j.at("init_ranges").contains(name)) c.init.*field = interval_from(j.at("init_ranges").at(name), c.init.*field);
    c.angle_range = j.value("angle_range", c.angle_range);
    c.action_levels = j.value("action_levels", c.action_levels);
    if (j.contains("agent")) {
      const json& a = j.at("agent");
      c.agent.gamma = a.value("gamma", c.agent.gamma);
      c.agent.learning_rate = a.value("learning_rate", c.agent.learning_rate);
      if (a.contains("epsilon")) c.agent.epsilon = epsilon_from(a.at("epsilon"), c.agent.epsilon);
      c.agent.batch_size = a.value("batch_size", c.agent.batch_size);
      c.agent.target_sync_period = a.value("target_sync_period", c.agent.target_sync_period);
      c.agent.replay_capacity = a.value("replay_capacity", c.agent.replay_capacity);
      c.agent.hidden_sizes = a.value("hidden_sizes", c.agent.hidden_sizes);
    }
    if (j.contains("curriculum")) {
      const json& k = j.at("curriculum");
      auto& cur = c.curriculum;
      if (k.contains("convergence")) cur.convergence = convergence_from(k.at("convergence"), cur.convergence);
      if (k.contains("first_stage_epsilon"))
        cur.first_stage_epsilon = epsilon_from(k.at("first_stage_epsilon"), cur.first_stage_epsilon);
      if (k.contains("later_stage_epsilon"))
        cur.later_stage_epsilon = epsilon_from(k.at("later_stage_epsilon"), cur.later_stage_epsilon);
      cur.episode_duration = k.value("episode_duration", cur.episode_duration);
      cur.eval_episodes = k.value("eval_episodes", cur.eval_episodes);
    }
    if (j.contains("profiles")) {
      for (const auto& [name, value] : j.at("profiles").items()) {
        SkillProfile p = c.profiles.count(name) ? c.profiles.at(name) : SkillProfile{};
        p.name = name;
        from_json(value, p);
        c.profiles[name] = p;
      }
    }
    if (j.contains("reward_tree")) c.tree = j.at("reward_tree").get<DecompositionTree>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment config: " + path.string());
  ExperimentConfig c = ExperimentConfig::defaults();
  try {
    from_json(json::parse(in), c);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void to_json(json& j, const CaseMetrics& m) {
  j = {{"case", m.case_id},
       {"seeds", m.seeds},
       {"human_involved_episodes", m.human_involved_episodes},
       {"total_episodes", m.total_episodes},
       {"involvement_percentage", m.involvement_percentage},
       {"error_translation", m.error_translation},
       {"error_rotation", m.error_rotation},
       {"error_ball", m.error_ball},
       {"error_total", m.error_total},
       {"converged", m.converged},
       {"wall_time", m.wall_time}};
}

void from_json(const json& j, CaseMetrics& m) {
  m.case_id = j.at("case").get<int>();
  m.seeds = j.at("seeds").get<int>();
  m.human_involved_episodes = j.at("human_involved_episodes").get<long>();
  m.total_episodes = j.at("total_episodes").get<long>();
  m.involvement_percentage = j.at("involvement_percentage").get<double>();
  m.error_translation = j.at("error_translation").get<double>();
  m.error_rotation = j.at("error_rotation").get<double>();
  m.error_ball = j.at("error_ball").get<double>();
  m.error_total = j.at("error_total").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.wall_time = j.at("wall_time").get<double>();
}

void to_json(json& j, const CaseRun& run) {
  json seeds = json::array();
  for (const auto& r : run.runs) {
    json episodes = json::array();
    for (const auto& e : r.episodes)
      episodes.push_back({e.stage, e.episode, e.reward, e.epsilon, e.partner_present, e.valid});
    json trace = json::array();
    for (const auto& t : r.trace)
      trace.push_back({t.t, t.slider_pos, t.pendulum_angle, t.ball_pos, t.robot_action, t.partner_action});
    seeds.push_back({{"seed", r.seed},
                     {"episodes", episodes},
                     {"stage_episodes", r.stage_episodes},
                     {"stage_converged", r.stage_converged},
                     {"errors", {r.errors.translation, r.errors.rotation, r.errors.ball, r.errors.total}},
                     {"trace", trace},
                     {"wall_time", r.wall_time}});
  }
  j = {{"case", run.training_case.id}, {"partner", run.partner}, {"runs", seeds}, {"metrics", run.metrics}};
}

void from_json(const json& j, CaseRun& run) {
  run.training_case = build_case(j.at("case").get<int>());
  run.partner = j.at("partner").get<std::string>();
  run.metrics = j.at("metrics").get<CaseMetrics>();
  run.runs.clear();
  for (const auto& s : j.at("runs")) {
    SeedRun r;
    r.seed = s.at("seed").get<std::uint64_t>();
    for (const auto& e : s.at("episodes"))
      r.episodes.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>(), e[3].get<double>(),
                            e[4].get<bool>(), e[5].get<bool>()});
    r.stage_episodes = s.at("stage_episodes").get<std::vector<int>>();
    r.stage_converged = s.at("stage_converged").get<std::vector<bool>>();
    const auto& e = s.at("errors");
    r.errors = {e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()};
    for (const auto& t : s.at("trace"))
      r.trace.push_back({t[0].get<double>(), t[1].get<double>(), t[2].get<double>(), t[3].get<double>(),
                         t[4].get<double>(), t[5].get<double>()});
    r.wall_time = s.at("wall_time").get<double>();
    run.runs.push_back(std::move(r));
  }
}

void write_metrics_csv(std::ostream& out, std::span<const CaseMetrics> metrics) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& m : metrics) {
    out << m.case_id << ',' << to_string(build_case(m.case_id).category) << ',' << m.seeds << ','
        << m.human_involved_episodes << ',' << m.total_episodes << ',' << format_double(m.involvement_percentage)
        << ',' << format_double(m.error_translation) << ',' << format_double(m.error_rotation) << ','
        << format_double(m.error_ball) << ',' << format_double(m.error_total) << ',' << (m.converged ? 1 : 0)
        << ',' << format_double(m.wall_time) << '\n';
  }
}

std::vector<CaseMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) throw FormatError("metrics csv: unexpected header");
  std::vector<CaseMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 12) throw FormatError("metrics csv: expected 12 columns in '" + line + "'");
    CaseMetrics m;
    m.case_id = static_cast<int>(parse_int(f[0], "case"));
    m.seeds = static_cast<int>(parse_int(f[2], "seeds"));
    m.human_involved_episodes = parse_int(f[3], "human_involved_episodes");
    m.total_episodes = parse_int(f[4], "total_episodes");
    m.involvement_percentage = parse_double(f[5], "involvement_percentage");
    m.error_translation = parse_double(f[6], "error_translation");
    m.error_rotation = parse_double(f[7], "error_rotation");
    m.error_ball = parse_double(f[8], "error_ball");
    m.error_total = parse_double(f[9], "error_total");
    m.converged = parse_int(f[10], "converged") != 0;
    m.wall_time = parse_double(f[11], "wall_time");
    out.push_back(m);
  }
  return out;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void export_metrics(std::span<const CaseRun> runs, const std::filesystem::path& out_dir, double episode_duration) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<CaseMetrics> metrics;
  std::map<int, CaseMetrics> by_case;
  for (const auto& run : runs) {
    const std::string stem = "case" + std::to_string(run.training_case.id);

    const auto episodes_path = out_dir / (stem + "_episodes.csv");
    auto episodes = open_for_write(episodes_path);
    episodes << kEpisodeCsvHeader << '\n';
    for (const auto& r : run.runs)
      for (const auto& e : r.episodes)
        episodes << r.seed << ',' << e.stage << ',' << e.episode << ',' << format_double(e.reward) << ','
                 << format_double(e.epsilon) << ',' << (e.partner_present ? 1 : 0) << ',' << (e.valid ? 1 : 0)
                 << '\n';
    finish(episodes, episodes_path);

    const auto trace_path = out_dir / (stem + "_action_trace.csv");
    auto trace = open_for_write(trace_path);
    trace << kTraceCsvHeader << '\n';
    for (const auto& r : run.runs)
      for (const auto& t : r.trace)
        trace << r.seed << ',' << format_double(t.t) << ',' << format_double(t.slider_pos) << ','
              << format_double(t.pendulum_angle) << ',' << format_double(t.ball_pos) << ','
              << format_double(t.robot_action) << ',' << format_double(t.partner_action) << '\n';
    finish(trace, trace_path);

    metrics.push_back(run.metrics);
    by_case[run.training_case.id] = run.metrics;
  }

  const auto metrics_path = out_dir / "metrics.csv";
  auto metrics_out = open_for_write(metrics_path);
  write_metrics_csv(metrics_out, metrics);
  finish(metrics_out, metrics_path);

  if (by_case.size() == 6) {
    json doc = json::object();
    for (const auto& [category, s] : three_factor_summary(by_case, episode_duration))
      doc[to_string(category)] = {{"involvement", s.involvement},
                                  {"time", s.time},
                                  {"performance", s.performance},
                                  {"raw_involvement_episodes", s.raw_involvement},
                                  {"raw_time_s", s.raw_time},
                                  {"raw_performance", s.raw_performance}};
    const auto path = out_dir / "three_factor.json";
    auto out = open_for_write(path);
    out << doc.dump(2) << '\n';
    finish(out, path);
  }
}

void save_run(std::span<const CaseRun> runs, const ExperimentConfig& config, const std::filesystem::path& path) {
  json doc = {{"format", "hrc-run"}, {"version", 1}, {"config", config}, {"cases", json::array()}};
  for (const auto& run : runs) doc["cases"].push_back(run);
  auto out = open_for_write(path);
  out << doc.dump() << '\n';
  finish(out, path);
}

std::vector<CaseRun> load_run(const std::filesystem::path& path, ExperimentConfig* config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run record: " + path.string());
  try {
    const json doc = json::parse(in);
    if (doc.value("format", "") != "hrc-run") throw FormatError(path.string() + ": not an hrc run record");
    if (config) {
      *config = ExperimentConfig::defaults();
      from_json(doc.at("config"), *config);
    }
    return doc.at("cases").get<std::vector<CaseRun>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace hrc
