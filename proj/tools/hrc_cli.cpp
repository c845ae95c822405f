// Command line front end: train, validate, sweep, export, serve, replay.

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "hrc/curriculum.hpp"
#include "hrc/error.hpp"
#include "hrc/numeric_text.hpp"
#include "hrc/session.hpp"
#include "hrc/session_server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kFormat = 4,
  kIo = 5,
  kNumeric = 6,
  kIncomplete = 7,
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(static_cast<std::uint64_t>(hrc::parse_int(item, "seed")));
    } else {
      const long lo = hrc::parse_int(item.substr(0, dash), "seed range start");
      const long hi = hrc::parse_int(item.substr(dash + 1), "seed range end");
      if (lo > hi) throw hrc::ConfigError("seed range " + item + " is empty");
      for (long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (seeds.empty()) throw hrc::ConfigError("no seeds given");
  for (auto s : seeds)
    if (static_cast<long>(s) < 0) throw hrc::ConfigError("seeds must be non-negative");
  return seeds;
}

struct Settings {
  hrc::ExperimentConfig experiment = hrc::ExperimentConfig::defaults();
  json session = json::object();  // "session" section of the config file
};

Settings load_settings(const std::string& path) {
  Settings s;
  if (path.empty()) return s;
  s.experiment = hrc::load_experiment_config(path);
  std::ifstream in(path);
  const json doc = json::parse(in);
  if (doc.contains("session")) s.session = doc.at("session");
  return s;
}

std::string category_label(hrc::Category c) { return hrc::to_string(c); }

void print_metrics(const hrc::CaseMetrics& m) {
  std::printf("case %d  %-18s involved %5.1f/%5.1f ep (%3.0f%%)  error C %.4f P %.4f B %.4f total %.4f  %s\n",
              m.case_id, category_label(hrc::build_case(m.case_id).category).c_str(), m.mean_human_involved(),
              m.mean_total_episodes(), 100.0 * m.involvement_percentage, m.error_translation, m.error_rotation,
              m.error_ball, m.error_total, m.converged ? "converged" : "NOT converged");
}

void save_outputs(const std::vector<hrc::CaseRun>& runs, const hrc::ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  hrc::save_run(runs, config, out / "run.json");
  for (const auto& run : runs)
    for (const auto& seed_run : run.runs)
      hrc::save_weights(seed_run.weights, out / ("case" + std::to_string(run.training_case.id) + "_seed" +
                                                 std::to_string(seed_run.seed) + ".weights"));
  hrc::export_metrics(runs, out, config.curriculum.episode_duration);
}

void check_profile(const std::string& partner, const hrc::ExperimentConfig& config) {
  if (partner == hrc::kMixedProfile) return;
  hrc::find_profile(config.profiles, partner);
}

std::uint16_t env_port(std::uint16_t fallback) {
  if (const char* v = std::getenv("HRC_PORT")) {
    const long p = hrc::parse_int(v, "HRC_PORT");
    if (p < 0 || p > 65535) throw hrc::ConfigError("HRC_PORT out of range");
    return static_cast<std::uint16_t>(p);
  }
  return fallback;
}

double env_pacing(double fallback) {
  if (const char* v = std::getenv("HRC_PACING")) return hrc::parse_double(v, "HRC_PACING");
  return fallback;
}

hrc::SessionResult serve(const Settings& settings, hrc::SessionConfig session) {
  const hrc::ExperimentConfig& config = settings.experiment;
  session.validate(config);
  std::optional<hrc::SessionRecorder> recorder;
  if (!session.record_path.empty()) recorder.emplace(session.record_path, hrc::session_header(session, config));

  const hrc::TrainingCase tc = hrc::build_case(session.case_id, config.curriculum);
  hrc::msg::Hello hello;
  hello.role = "server";
  hello.case_id = session.case_id;
  hello.config = {{"dt", config.physics.dt},
                  {"pacing", session.pacing},
                  {"first_stage", session.first_stage},
                  {"stages", tc.stages.size()},
                  {"partner_channel", hrc::to_string(tc.partner_channel)},
                  {"robot_channel", hrc::to_string(tc.robot_channel)},
                  {"steps_per_episode", config.steps_per_episode()},
                  {"slider_half_range", config.physics.slider_half_range},
                  {"pendulum_half_length", config.physics.pendulum_half_length}};

  hrc::WebSocketLink link(session.port, hello, recorder ? &*recorder : nullptr);
  std::fprintf(stderr, "serving case %d on ws://0.0.0.0:%u (pacing %.3f s)\n", session.case_id, link.port(),
               session.pacing);
  return hrc::run_live_session(session, config, link, recorder ? &*recorder : nullptr, g_stop);
}

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical-reward human-robot cooperation trainer"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; overrides built-in defaults")->check(CLI::ExistingFile);

  // train
  auto* train = app.add_subcommand("train", "Train one case over a list of seeds");
  int train_case = 0;
  std::string train_partner = hrc::kMixedProfile;
  std::string train_seeds = "1";
  std::string train_out = "out";
  std::string train_record;
  train->add_option("--case", train_case, "Case id 1..6")->required()->check(CLI::Range(1, 6));
  train->add_option("--partner", train_partner,
                    "ideal | skilled_translation | weak_rotation | mixed | remote (or a profile from the config)");
  train->add_option("--seeds", train_seeds, "Seeds, e.g. 1,2,3 or 1-5");
  train->add_option("--out", train_out, "Output directory");
  train->add_option("--record", train_record, "Session log path (remote partner only)");

  // validate
  auto* validate = app.add_subcommand("validate", "Evaluate saved weights with a surrogate partner");
  std::string weights_path;
  int validate_case = 0;
  std::string validate_partner = hrc::kMixedProfile;
  std::string validate_seeds = "1";
  validate->add_option("--weights", weights_path, "Weight file")->required()->check(CLI::ExistingFile);
  validate->add_option("--case", validate_case, "Case id 1..6")->required()->check(CLI::Range(1, 6));
  validate->add_option("--partner", validate_partner, "Surrogate profile");
  validate->add_option("--seeds", validate_seeds, "Validation seeds");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run every case and summarize");
  bool all_cases = false;
  int sweep_seeds = 5;
  std::string sweep_partner = hrc::kMixedProfile;
  std::string sweep_out = "sweep";
  sweep->add_flag("--all-cases", all_cases, "Run cases 1..6")->required();
  sweep->add_option("--seeds", sweep_seeds, "Number of seeds (1..n)")->check(CLI::PositiveNumber);
  sweep->add_option("--partner", sweep_partner, "Surrogate profile");
  sweep->add_option("--out", sweep_out, "Output directory");

  // export
  auto* exp = app.add_subcommand("export", "Re-export the result files of a saved run");
  std::string run_dir;
  std::string export_out;
  exp->add_option("--run", run_dir, "Run directory containing run.json")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", export_out, "Destination (defaults to the run directory)");

  // serve
  auto* srv = app.add_subcommand("serve", "Live session with a remote operator");
  int serve_case = 0;
  std::optional<int> serve_port;
  std::optional<double> serve_pacing;
  std::string serve_record;
  int serve_stage = 0;
  std::uint64_t serve_seed = 1;
  std::string serve_out;
  srv->add_option("--case", serve_case, "Case id 1..6")->required()->check(CLI::Range(1, 6));
  srv->add_option("--port", serve_port, "TCP port (env HRC_PORT)")->check(CLI::Range(0, 65535));
  srv->add_option("--record", serve_record, "Session log path");
  srv->add_option("--pacing", serve_pacing, "Seconds per control step (env HRC_PACING)");
  srv->add_option("--stage", serve_stage, "First stage index");
  srv->add_option("--seed", serve_seed, "Agent seed");
  srv->add_option("--out", serve_out, "Directory for weights and metrics");

  // replay
  auto* rep = app.add_subcommand("replay", "Re-run a recorded session offline");
  std::string replay_log;
  rep->add_option("--log", replay_log, "Session log")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const Settings settings = load_settings(config_path);
  const hrc::ExperimentConfig& config = settings.experiment;
  config.validate();

  auto session_defaults = [&](int case_id) {
    hrc::SessionConfig s;
    s.case_id = case_id;
    s.pacing = settings.session.value("pacing", config.physics.dt);
    s.port = static_cast<std::uint16_t>(settings.session.value("port", 8765));
    s.port = env_port(s.port);
    s.pacing = env_pacing(s.pacing);
    return s;
  };

  if (*train) {
    const auto seeds = parse_seeds(train_seeds);
    if (train_partner == "remote") {
      if (seeds.size() != 1) throw hrc::ConfigError("a remote partner trains one seed at a time");
      hrc::SessionConfig s = session_defaults(train_case);
      s.seed = seeds.front();
      fs::create_directories(train_out);
      s.record_path = train_record.empty() ? fs::path(train_out) / "session.log" : fs::path(train_record);
      const hrc::SessionResult r = serve(settings, s);
      hrc::save_weights(r.run.weights, fs::path(train_out) / ("case" + std::to_string(train_case) + "_seed" +
                                                               std::to_string(s.seed) + ".weights"));
      print_metrics(r.metrics);
      return r.completed ? kOk : kIncomplete;
    }
    check_profile(train_partner, config);
    hrc::CaseRun run = hrc::run_case(train_case, seeds, train_partner, config);
    save_outputs({run}, config, train_out);
    print_metrics(run.metrics);
    return kOk;
  }

  if (*validate) {
    if (validate_partner == "remote") throw hrc::ConfigError("validate runs offline; use serve for a live partner");
    check_profile(validate_partner, config);
    const hrc::QNetwork net = hrc::load_weights(weights_path);
    const hrc::TrainingCase tc = hrc::build_case(validate_case, config.curriculum);
    const auto seeds = parse_seeds(validate_seeds);
    const auto partner = hrc::surrogate_factory(validate_partner, config)(tc.partner_channel);
    const hrc::EvaluationResult e =
        hrc::evaluate_policy(net, *partner, tc, config, seeds, config.curriculum.episode_duration);
    std::printf("case %d  error C %.6f P %.6f B %.6f total %.6f\n", validate_case, e.errors.translation,
                e.errors.rotation, e.errors.ball, e.errors.total);
    return kOk;
  }

  if (*sweep) {
    (void)all_cases;
    check_profile(sweep_partner, config);
    std::vector<std::uint64_t> seeds;
    for (int s = 1; s <= sweep_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    std::vector<hrc::CaseRun> runs;
    for (int id = 1; id <= 6; ++id) {
      runs.push_back(hrc::run_case(id, seeds, sweep_partner, config));
      print_metrics(runs.back().metrics);
    }
    save_outputs(runs, config, sweep_out);
    std::map<int, hrc::CaseMetrics> metrics;
    for (const auto& r : runs) metrics[r.training_case.id] = r.metrics;
    for (const auto& [cat, s] : hrc::three_factor_summary(metrics, config.curriculum.episode_duration))
      std::printf("%-18s involvement %.3f time %.3f performance %.3f\n", hrc::to_string(cat).c_str(), s.involvement,
                  s.time, s.performance);
    return kOk;
  }

  if (*exp) {
    hrc::ExperimentConfig saved;
    const auto runs = hrc::load_run(fs::path(run_dir) / "run.json", &saved);
    const fs::path out = export_out.empty() ? fs::path(run_dir) : fs::path(export_out);
    fs::create_directories(out);
    hrc::export_metrics(runs, out, saved.curriculum.episode_duration);
    for (const auto& r : runs) print_metrics(r.metrics);
    return kOk;
  }

  if (*srv) {
    hrc::SessionConfig s = session_defaults(serve_case);
    if (serve_port) s.port = static_cast<std::uint16_t>(*serve_port);
    if (serve_pacing) s.pacing = *serve_pacing;
    s.first_stage = serve_stage;
    s.seed = serve_seed;
    s.record_path = serve_record;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const hrc::SessionResult r = serve(settings, s);
    if (!serve_out.empty()) {
      fs::create_directories(serve_out);
      hrc::save_weights(r.run.weights, fs::path(serve_out) / ("case" + std::to_string(serve_case) + "_seed" +
                                                               std::to_string(serve_seed) + ".weights"));
    }
    print_metrics(r.metrics);
    return r.completed ? kOk : kIncomplete;
  }

  if (*rep) {
    const hrc::SessionLog log = hrc::load_session_log(replay_log);
    const hrc::SessionResult r = hrc::replay_session(log);
    const auto recorded = log.episode_rewards();
    std::vector<double> replayed;
    for (const auto& e : r.run.episodes) replayed.push_back(e.reward);
    const bool same = recorded == replayed;
    print_metrics(r.metrics);
    std::printf("episode rewards %s the recording (%zu episodes)\n", same ? "match" : "DIFFER from", replayed.size());
    return same ? kOk : kIncomplete;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hrc::ConfigError& e) {
    std::fprintf(stderr, "error [config]: %s\n", e.what());
    return kConfig;
  } catch (const hrc::FormatError& e) {
    std::fprintf(stderr, "error [format]: %s\n", e.what());
    return kFormat;
  } catch (const hrc::IoError& e) {
    std::fprintf(stderr, "error [io]: %s\n", e.what());
    return kIo;
  } catch (const hrc::NumericFault& e) {
    std::fprintf(stderr, "error [numeric]: %s\n", e.what());
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error [io]: %s\n", e.what());
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error [config]: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [internal]: %s\n", e.what());
    return kInternal;
  }
}
