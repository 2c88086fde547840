// crowdnav: map processing, training, evaluation and episode export.

#include "crowdnav/checkpoint.hpp"
#include "crowdnav/config_io.hpp"
#include "crowdnav/eval.hpp"
#include "crowdnav/map_io.hpp"
#include "crowdnav/ppo.hpp"
#include "crowdnav/run_config.hpp"
#include "crowdnav/seeding.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crowdnav;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

RunConfig resolve_config(const std::string& path, const Globals& g) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  if (path.empty()) c.setup.features.position_scale = c.setup.env.arena_half_width;
  if (g.seed) c.seed = g.seed;
  if (g.threads) c.threads = *g.threads;
  c.finalize();
  return c;
}

// process-map ---------------------------------------------------------------

struct ProcessMapArgs {
  std::string grid, out;
  double resolution = 0.05;
  MapProcessParams params;
};

int cmd_process_map(const ProcessMapArgs& a) {
  GraymapImport import;
  import.resolution = a.resolution;
  const OccupancyGrid grid = read_grid_file(a.grid, import);
  const MapProcessResult r = process_map(grid, a.params);
  if (r.dropped_components > 0) {
    std::cerr << "warning: dropped " << r.dropped_components << " component(s) that did not form a valid polygon\n";
  }
  std::ostringstream text;
  write_map_model(text, r.model);
  write_text(a.out, text.str());
  std::cout << r.model.obstacles.size() << " polygon(s) written to " << a.out << "\n";
  return 0;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config, out, resume;
};

int cmd_train(const TrainArgs& a, const Globals& g) {
  std::unique_ptr<Trainer> trainer;
  RunConfig rc;
  if (!a.resume.empty()) {
    const Checkpoint ck = load_checkpoint(a.resume);
    int threads = g.threads.value_or(1);
    trainer = Trainer::from_checkpoint(ck, threads);
    rc.setup = trainer->setup();
    rc.seed = rc.setup.ppo.seed;
    rc.threads = threads;
    if (ck.metadata.contains("run")) rc.checkpoint_every = ck.metadata["run"].value("checkpoint_every", 10);
    if (!a.config.empty()) {
      std::cerr << "note: --config is ignored with --resume; the checkpoint's config is used\n";
    }
  } else {
    rc = resolve_config(a.config, g);
    if (!rc.seed) throw UsageError("train needs a seed (config \"seed\" or --seed)");
    trainer = std::make_unique<Trainer>(rc.setup, rc.threads);
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.json", rc.to_json().dump(2) + "\n");
  std::ofstream stats(dir / "stats.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!stats) throw std::runtime_error("cannot write " + (dir / "stats.jsonl").string());

  auto save = [&](const TrainStats* st, const std::string& name) {
    Checkpoint ck = trainer->checkpoint(st);
    ck.metadata["run"] = {{"checkpoint_every", rc.checkpoint_every}};
    save_checkpoint(ck, dir / name);
  };

  TrainStats last;
  bool any = false;
  while (!trainer->finished()) {
    last = trainer->iterate();
    any = true;
    stats << last.to_json().dump() << '\n';
    stats.flush();
    std::fprintf(stderr, "iter %d  steps %lld  success %.2f  reward %.2f  len %.1f  entropy %.3f  lr %.2e\n",
                 last.iteration, static_cast<long long>(last.env_steps), last.success_rate, last.mean_episode_reward,
                 last.mean_episode_length, last.entropy, last.lr);
    if (last.iteration % rc.checkpoint_every == 0) {
      save(&last, "ckpt_" + std::to_string(last.iteration) + ".ckpt");
    }
  }
  save(any ? &last : nullptr, "final.ckpt");
  std::cout << "trained " << trainer->env_steps() << " env steps; checkpoint " << (dir / "final.ckpt").string() << "\n";
  return 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, suite, out, baseline, config, trajectories;
};

int cmd_eval(const EvalArgs& a, const Globals& g) {
  if (a.ckpt.empty() && a.baseline.empty()) throw UsageError("eval needs --ckpt or --baseline");
  EnvConfig env;
  AgentFactory factory;
  json config;
  std::string config_suite;
  if (!a.ckpt.empty()) {
    const LoadedPolicy loaded = policy_from_checkpoint(load_checkpoint(a.ckpt));
    env = loaded.setup.env;
    config = loaded.setup.to_json();
    if (a.baseline.empty()) {
      auto policy = loaded.policy;
      const FeatureConfig features = loaded.setup.features;
      factory = [policy, features] { return std::make_unique<PolicyAgent>(policy, features); };
    }
  } else {
    const RunConfig rc = resolve_config(a.config, g);
    env = rc.setup.env;
    config = rc.setup.to_json();
    config_suite = rc.suite;
  }

  // --suite, then --seed (500 seeds from there), then the run config's suite.
  std::vector<std::uint64_t> seeds;
  if (!a.suite.empty()) {
    seeds = parse_seed_list(a.suite);
  } else if (g.seed) {
    seeds = seed_range(*g.seed, 500);
  } else if (!config_suite.empty()) {
    seeds = parse_seed_list(config_suite);
  } else {
    throw UsageError("eval needs --suite or --seed");
  }
  for (std::uint64_t s : seeds) {
    if (is_training_seed(s)) throw UsageError("test seeds must be below 2^63");
  }

  if (!a.baseline.empty()) {
    factory = baseline_factory(a.baseline, env);
    config = {{"env", to_json(env)}, {"baseline", a.baseline}};
  }

  SuiteOptions options;
  options.threads = g.threads.value_or(1);
  if (!a.trajectories.empty()) options.trajectory_dir = fs::path(a.trajectories);
  const MetricsReport report = run_suite(env, seeds, factory, options);
  write_text(a.out, eval_report(report, config, seeds).dump(2) + "\n");
  std::printf("%s: success %.3f  collision %.3f  timeout %.3f  time %.2f s  (%d episodes, %d failed)\n",
              report.agent.c_str(), report.success_rate, report.collision_rate, report.timeout_rate,
              report.avg_nav_time, report.completed, report.failed);
  return report.failed > 0 ? 2 : 0;
}

// ablate --------------------------------------------------------------------

struct AblateArgs {
  std::string config, out = "ablation", suite;
};

int cmd_ablate(const AblateArgs& a, const Globals& g) {
  const RunConfig rc = resolve_config(a.config, g);
  if (!rc.seed) throw UsageError("ablate needs a seed (config \"seed\" or --seed)");
  AblationOptions options;
  options.threads = rc.threads;
  options.suite = parse_seed_list(a.suite.empty() ? rc.suite : a.suite);
  options.out_dir = fs::path(a.out);
  options.on_iteration = [](AttentionStages s, const TrainStats& st) {
    std::fprintf(stderr, "[%s] iter %d  steps %lld  success %.2f\n", to_string(s).c_str(), st.iteration,
                 static_cast<long long>(st.env_steps), st.success_rate);
  };
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "config.json", rc.to_json().dump(2) + "\n");
  const auto entries = ablation_matrix(rc.setup, options);
  write_text(fs::path(a.out) / "report.json", ablation_report(entries, rc.to_json()).dump(2) + "\n");
  std::cout << ablation_table(entries);
  return 0;
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string ckpt, exported, baseline, config;
};

json matrix_json(const nn::Matrix<float>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
  const std::optional<std::uint64_t> seed = g.seed;
  if (!seed) throw UsageError("simulate needs --seed");
  if (a.ckpt.empty() && a.baseline.empty()) throw UsageError("simulate needs --ckpt or --baseline");

  EnvConfig env;
  std::unique_ptr<Agent> agent;
  PolicyAgent* policy_agent = nullptr;
  if (!a.ckpt.empty()) {
    const LoadedPolicy loaded = policy_from_checkpoint(load_checkpoint(a.ckpt));
    env = loaded.setup.env;
    if (a.baseline.empty()) {
      auto pa = std::make_unique<PolicyAgent>(loaded.policy, loaded.setup.features);
      policy_agent = pa.get();
      agent = std::move(pa);
    }
  } else {
    env = resolve_config(a.config, g).setup.env;
  }
  if (!a.baseline.empty()) agent = baseline_factory(a.baseline, env)();

  CrowdEnv sim(env);
  std::ostringstream log;
  Observation obs = sim.reset(*seed);
  agent->begin_episode(*seed);
  json header = episode_header(sim);
  header["agent"] = agent->name();
  log << header.dump() << '\n';
  for (;;) {
    const int action = agent->act(obs);
    StepResult r = sim.step(action);
    json rec = step_record(sim, action, r);
    if (policy_agent) {
      const PolicyOutput<float>& out = policy_agent->last_output();
      json hh = json::array();
      for (const auto& w : out.hh_weights) hh.push_back(matrix_json(w));
      rec["attention"] = {{"hh", std::move(hh)},
                          {"oh", out.oh_weights.size() ? matrix_json(out.oh_weights) : json::array()},
                          {"rh", matrix_json(out.rh_weights)}};
      rec["value"] = out.value;
    }
    log << rec.dump() << '\n';
    if (r.done) {
      std::cout << "seed " << *seed << ": " << to_string(r.outcome) << " after " << sim.t() << " steps\n";
      break;
    }
    obs = std::move(r.observation);
  }
  write_text(a.exported, log.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd navigation with structured attention: map processing, PPO training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  ProcessMapArgs pm;
  auto* process = app.add_subcommand("process-map", "Convert an occupancy grid into obstacle polygons");
  process->add_option("grid", pm.grid, "Grid file (.grid text or .pgm)")->required();
  process->add_option("--out", pm.out, "Output map file (JSON)")->required();
  process->add_option("--resolution", pm.resolution, "Meters per cell for PGM input");
  process->add_option("--threshold", pm.params.occupied_threshold, "Occupied if cell value >= threshold");
  process->add_option("--closing", pm.params.closing_radius_cells, "Closing radius in cells");
  process->add_option("--tolerance", pm.params.simplify_tolerance_cells, "Simplification tolerance in cells");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a policy with PPO");
  train->add_option("--config", ta.config, "Run config (JSON)");
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_option("--resume", ta.resume, "Checkpoint to resume from");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or baseline on a seeded test suite");
  eval->add_option("--ckpt", ea.ckpt, "Checkpoint");
  eval->add_option("--suite", ea.suite, "Seeds: a-b, a,b,c or @file");
  eval->add_option("--out", ea.out, "Report file (JSON)")->required();
  eval->add_option("--baseline", ea.baseline, "straight_to_goal or random");
  eval->add_option("--config", ea.config, "Run config for the env when no checkpoint is given");
  eval->add_option("--trajectories", ea.trajectories, "Directory for per-episode trajectory logs");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate RH, RH+OH and RH+HH+OH");
  ablate->add_option("--config", aa.config, "Run config (JSON)")->required();
  ablate->add_option("--out", aa.out, "Output directory");
  ablate->add_option("--suite", aa.suite, "Seeds: a-b, a,b,c or @file");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run one episode and export its trajectory");
  simulate->add_option("--ckpt", sa.ckpt, "Checkpoint");
  simulate->add_option("--export", sa.exported, "Trajectory file (JSON lines)")->required();
  simulate->add_option("--baseline", sa.baseline, "straight_to_goal or random");
  simulate->add_option("--config", sa.config, "Run config for the env when no checkpoint is given");

  for (auto* sub : {process, train, eval, ablate, simulate}) {
    sub->add_option("--seed", g.seed, "Run seed (simulate: episode seed)");
    sub->add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*process) return cmd_process_map(pm);
    if (*train) return cmd_train(ta, g);
    if (*eval) return cmd_eval(ea, g);
    if (*ablate) return cmd_ablate(aa, g);
    if (*simulate) return cmd_simulate(sa, g);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
