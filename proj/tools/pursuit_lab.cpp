// pursuit_lab: validate configs, train, evaluate, roll out and render episodes.
//
// Exit codes: 0 success, 1 domain violation, 2 usage or IO error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pursuit/pursuit.hpp"

namespace fs = std::filesystem;
using namespace pursuit;

namespace {

constexpr const char* kToolVersion = "0.1.0";

/// Thrown for usage and IO problems (exit 2); anything else escaping a command is a
/// domain error (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path asset_root() {
  if (const char* dir = std::getenv("PURSUIT_LAB_DIR"); dir && *dir) return dir;
#ifdef PURSUIT_DATA_DIR
  return PURSUIT_DATA_DIR;
#else
  return "data";
#endif
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write " + p.string());
  f << text;
}

/// An existing file path, or a built-in scenario name (looked up under the asset root
/// first, then the compiled-in definition).
EnvConfig load_env(const std::string& name_or_path) {
  if (fs::is_regular_file(name_or_path)) return parse_config(read_file(name_or_path));
  if (is_builtin_env(name_or_path)) {
    const fs::path shipped = asset_root() / "envs" / "v1" / (name_or_path + ".json");
    if (fs::is_regular_file(shipped)) return parse_config(read_file(shipped));
    return builtin_env(name_or_path);
  }
  throw UsageError("unknown environment '" + name_or_path + "' (not a file or built-in name)");
}

/// A policy id ("greedy", "vicsek", "random") or a checkpoint path.
rl::PolicyRef load_policy(const std::string& spec) {
  if (spec == rl::kRandomId || is_scripted_pursuer_id(spec)) return rl::PolicyRef::scripted(spec);
  if (!fs::is_regular_file(spec)) throw UsageError("no such policy or checkpoint: " + spec);
  auto model = std::make_shared<rl::AgentModel<float>>(rl::load_model<float>(spec));
  return rl::PolicyRef::learned(fs::path(spec).stem().string(), model);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Manifest written before any long computation. The hash covers the command line,
/// resolved environment config and the bytes of every input file.
void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                    const EnvConfig* env, const std::vector<std::string>& inputs, std::uint64_t seed) {
  std::uint64_t h = fnv1a(command);
  for (const auto& a : argv) h = fnv1a(a, h ^ 0x1f);
  if (env) h = fnv1a(serialize_config(*env), h);
  Json files = Json::array();
  for (const auto& in : inputs) {
    if (fs::is_regular_file(in)) {
      h = fnv1a(read_file(in), h);
      files.push_back(in);
    }
  }
  Json m{{"command", command},
         {"argv", argv},
         {"config_paths", files},
         {"seed", seed},
         {"content_hash", hex64(h)},
         {"output_dir", dir.string()},
         {"tool_version", kToolVersion}};
  if (env) m["env"] = to_json(*env);
  fs::create_directories(dir);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

int jobs_for(int jobs, bool deterministic) {
  if (deterministic) return 1;
  return jobs > 0 ? jobs : 1;
}

// -- validate -----------------------------------------------------------------------------

int cmd_validate(const std::string& path) {
  std::string text = read_file(path);
  EnvConfig cfg;
  try {
    cfg = read_config(text);
  } catch (const ConfigError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  }
  const auto v = validate_config(cfg);
  for (const auto& x : v) std::cout << x.path << ": " << x.message << "\n";
  if (v.empty()) std::cout << "ok\n";
  return v.empty() ? 0 : 1;
}

// -- train --------------------------------------------------------------------------------

struct TrainArgs {
  std::string algo, env = "4p2e3o", out;
  std::uint64_t seed = 0;
  long steps = 1'000'000;
  int horizon = 0;
  int n_envs = 8;
  long checkpoint_every = 0;
  std::vector<std::string> pool;
  std::vector<std::string> init;
  int population = 4;
  long exploit_interval = 50'000;
  int generations = 5;
  int edge_episodes = 20;
  long sp_steps = 50'000;
  std::string subset_score = "mean";
  int jobs = 1;
  bool deterministic = false;
  bool quiet = false;
};

const std::vector<std::string> kAlgos = {"sp", "pbt", "mappo", "hola", "hola-nog", "naht-d", "naht-d-nodec"};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  EnvConfig env = load_env(a.env);
  if (a.horizon > 0) env.task.task_horizon = a.horizon;
  if (auto v = validate_config(env); !v.empty()) throw ValidationError(v);
  const fs::path out = a.out;
  std::vector<std::string> inputs = a.pool;
  inputs.insert(inputs.end(), a.init.begin(), a.init.end());
  if (fs::is_regular_file(a.env)) inputs.push_back(a.env);
  write_manifest(out, "train", argv, &env, inputs, a.seed);

  rl::TrainOptions opt;
  opt.ppo.total_steps = a.steps;
  opt.n_envs = a.n_envs;
  opt.checkpoint_every = a.checkpoint_every;
  if (!a.quiet)
    opt.on_metrics = [](const rl::MetricsRow& r) {
      std::cerr << r.member << " step " << r.step << " episodes " << r.episodes << " reward " << r.mean_reward
                << " SUC " << r.suc << "\n";
    };

  std::vector<rl::PolicyRef> pool;
  for (const auto& p : a.pool) pool.push_back(load_policy(p));
  if (pool.empty() && (a.algo == "mappo" || a.algo == "naht-d" || a.algo == "naht-d-nodec"))
    pool.push_back(rl::PolicyRef::scripted("greedy"));

  Json summary{{"algo", a.algo}, {"checkpoints", Json::array()}};
  auto record = [&](const std::vector<fs::path>& ckpts) {
    for (const auto& c : ckpts)
      if (!c.empty()) summary["checkpoints"].push_back(fs::relative(c, out).string());
  };

  if (a.algo == "sp") {
    rl::RunWriter w(out);
    record(rl::ippo_selfplay_train(opt, env, a.seed, w).checkpoints);
  } else if (a.algo == "mappo") {
    rl::RunWriter w(out);
    record(rl::mappo_train(opt, env, pool, a.seed, w).checkpoints);
  } else if (a.algo == "naht-d" || a.algo == "naht-d-nodec") {
    rl::RunWriter w(out);
    record(rl::naht_d_train(opt, env, pool, a.seed, w, a.algo == "naht-d").checkpoints);
  } else if (a.algo == "pbt") {
    rl::RunWriter w(out);
    rl::PbtOptions pbt;
    pbt.population = a.population;
    pbt.exploit_interval = a.exploit_interval;
    auto res = rl::pbt_train(opt, pbt, env, a.seed, w);
    record(res.checkpoints);
    summary["exploits"] = Json::array();
    for (const auto& e : res.exploits)
      summary["exploits"].push_back(
          {{"step", e.step}, {"target", e.target}, {"source", e.source}, {"lr", e.lr}, {"entropy_coef", e.entropy_coef}});
  } else if (a.algo == "hola" || a.algo == "hola-nog") {
    hola::HolaOptions h;
    h.generations = a.generations;
    h.steps_per_generation = a.steps;
    h.edge_episodes = a.edge_episodes;
    h.use_hypergraph = a.algo == "hola";
    h.score = hola::subset_score_from_string(a.subset_score);
    h.jobs = jobs_for(a.jobs, a.deterministic);
    std::vector<rl::PolicyRef> init;
    for (const auto& p : a.init) init.push_back(load_policy(p));
    auto pop = hola::initial_population(env, opt, a.seed, init, a.sp_steps, out);
    summary["generations"] = Json::array();
    hola::hola_train(pop, env, opt, h, a.seed, out, [&](const hola::GenerationReport& rep) {
      const std::string name = "generation_" + std::to_string(rep.generation) + ".json";
      write_file(out / name, hola::to_json(rep).dump(2) + "\n");
      summary["generations"].push_back(name);
      if (!rep.checkpoint.empty()) summary["checkpoints"].push_back(fs::relative(rep.checkpoint, out).string());
    });
  } else {
    throw UsageError("unknown algo '" + a.algo + "'");
  }
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

// -- eval ---------------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> ckpts;
  std::string zoo, env = "4p2e3o", report, zoo_dir;
  int episodes = 250;
  int horizon = 0;
  int seed_blocks = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool deterministic = false;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  EnvConfig env = load_env(a.env);
  if (a.horizon > 0) env.task.task_horizon = a.horizon;
  std::vector<rl::PolicyRef> learners;
  for (const auto& c : a.ckpts) learners.push_back(load_policy(c));
  eval::ZooAssets assets;
  if (a.zoo != "1") {
    const fs::path dir = a.zoo_dir.empty() ? asset_root() / "zoo" : fs::path(a.zoo_dir);
    try {
      assets = eval::load_zoo_assets(dir);
    } catch (const eval::ZooError& e) {
      throw UsageError(e.what());
    }
  }
  const auto zoo = eval::build_zoo(a.zoo, assets);
  write_manifest(a.report, "eval", argv, &env, a.ckpts, a.seed);
  const auto rep = eval::run_evaluation(learners, zoo, env, a.episodes, a.seed, a.seed_blocks, jobs_for(a.jobs, a.deterministic));
  write_file(fs::path(a.report) / "report.json", eval::to_json(rep).dump(2) + "\n");
  write_file(fs::path(a.report) / "report.csv", eval::to_csv(rep));
  std::cout << "SUC " << rep.overall.suc << " COL " << rep.overall.col << " AST "
            << (rep.overall.ast ? std::to_string(*rep.overall.ast) : "n/a") << " REW " << rep.overall.rew << "\n";
  return 0;
}

// -- rollout / render -------------------------------------------------------------------------

int cmd_rollout(const std::string& env_name, const std::vector<std::string>& policies, std::uint64_t seed, int horizon,
                const std::string& out) {
  EnvConfig env = load_env(env_name);
  if (horizon > 0) env.task.task_horizon = horizon;
  std::vector<rl::PolicyRef> team;
  for (const auto& p : policies) team.push_back(load_policy(p));
  if (team.size() == 1) team.assign(env.players.num_p, team[0]);
  std::ostringstream log;
  TrajectoryWriter w(log);
  const auto rec = run_episode(env, team, seed, &w);
  write_file(out, log.str());
  std::cout << to_string(rec.terminal) << " after " << rec.steps << " steps, return " << rec.ret << "\n";
  return 0;
}

int cmd_render(const std::string& log_path, const std::string& out) {
  std::ifstream f(log_path);
  if (!f) throw UsageError("cannot read " + log_path);
  Trajectory t;
  try {
    t = read_trajectory(f);
  } catch (const std::exception& e) {
    throw UsageError(std::string("malformed trajectory log: ") + e.what());
  }
  write_file(out, eval::render_episode(t));
  return 0;
}

// -- zoo assets -------------------------------------------------------------------------------

/// Measures each self-play checkpoint's SUC with all pursuer slots driven by itself and
/// writes a zoo asset directory.
int cmd_make_zoo(const std::vector<std::string>& ckpts, const std::string& env_name, int episodes, int horizon,
                 std::uint64_t seed, const std::string& out, int jobs) {
  EnvConfig env = load_env(env_name);
  if (horizon > 0) env.task.task_horizon = horizon;
  fs::create_directories(out);
  Json m{{"env", env.task.task_name}, {"episodes", episodes}, {"seed", seed}, {"self_play", Json::array()}};
  for (const auto& c : ckpts) {
    auto ref = load_policy(c);
    if (!ref.is_learned()) throw UsageError("zoo members must be checkpoints: " + c);
    const auto recs = hola::run_episodes(env, std::vector<rl::PolicyRef>(env.players.num_p, ref), seed, "zoo-suc",
                                         episodes, jobs);
    const double suc = eval::compute_metrics(recs).suc;
    const std::string name = ref.id + ".ckpt";
    fs::copy_file(c, fs::path(out) / name, fs::copy_options::overwrite_existing);
    m["self_play"].push_back({{"id", ref.id}, {"checkpoint", name}, {"suc", suc}});
    std::cout << ref.id << " self-play SUC " << suc << "\n";
  }
  write_file(fs::path(out) / "manifest.json", m.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-pursuer drone pursuit lab"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check an environment config");
  validate->add_option("--config", validate_path, "Config JSON path")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a policy or population");
  train->add_option("--algo", ta.algo, "sp|pbt|mappo|hola|hola-nog|naht-d|naht-d-nodec")
      ->required()
      ->check(CLI::IsMember(kAlgos));
  train->add_option("--env", ta.env, "Built-in scenario name or config path");
  train->add_option("--seed", ta.seed);
  train->add_option("--steps", ta.steps, "Environment steps (per generation for hola)");
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_option("--horizon", ta.horizon, "Override task_horizon");
  train->add_option("--n-envs", ta.n_envs, "Parallel environment instances per learner");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Environment steps between checkpoints");
  train->add_option("--pool", ta.pool, "Teammate pool (ids or checkpoints) for mappo / naht-d");
  train->add_option("--init", ta.init, "Initial self-play checkpoints for hola");
  train->add_option("--population", ta.population, "PBT population size");
  train->add_option("--exploit-interval", ta.exploit_interval, "PBT exploit interval in steps (0 disables)");
  train->add_option("--generations", ta.generations);
  train->add_option("--edge-episodes", ta.edge_episodes);
  train->add_option("--sp-steps", ta.sp_steps, "Steps for each initial self-play seed of hola");
  train->add_option("--subset-score", ta.subset_score, "mean|min|product")
      ->check(CLI::IsMember({"mean", "min", "product"}));
  train->add_option("--jobs", ta.jobs);
  train->add_flag("--deterministic", ta.deterministic);
  train->add_flag("--quiet", ta.quiet);

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Evaluate learners against an unseen zoo");
  evalc->add_option("--ckpt", ea.ckpts, "Learner checkpoints or policy ids")->required();
  evalc->add_option("--zoo", ea.zoo, "1|2|3")->required()->check(CLI::IsMember({"1", "2", "3"}));
  evalc->add_option("--zoo-dir", ea.zoo_dir, "Zoo asset directory");
  evalc->add_option("--env", ea.env);
  evalc->add_option("--episodes", ea.episodes)->check(CLI::PositiveNumber);
  evalc->add_option("--seed-blocks", ea.seed_blocks)->check(CLI::PositiveNumber);
  evalc->add_option("--horizon", ea.horizon);
  evalc->add_option("--seed", ea.seed);
  evalc->add_option("--report", ea.report, "Report directory")->required();
  evalc->add_option("--jobs", ea.jobs);
  evalc->add_flag("--deterministic", ea.deterministic);

  std::string log_path, svg_path;
  auto* render = app.add_subcommand("render", "Render a trajectory log to SVG");
  render->add_option("--log", log_path)->required();
  render->add_option("--out", svg_path)->required();

  std::string ro_env = "4p2e3o", ro_out;
  std::vector<std::string> ro_policies;
  std::uint64_t ro_seed = 0;
  int ro_horizon = 0;
  auto* rollout = app.add_subcommand("rollout", "Play one episode and write its trajectory log");
  rollout->add_option("--env", ro_env);
  rollout->add_option("--policy", ro_policies, "One per slot, or one for all slots")->required();
  rollout->add_option("--seed", ro_seed);
  rollout->add_option("--horizon", ro_horizon);
  rollout->add_option("--out", ro_out)->required();

  std::vector<std::string> zoo_ckpts;
  std::string zoo_env = "4p2e3o", zoo_out;
  int zoo_episodes = 100, zoo_horizon = 0, zoo_jobs = 1;
  std::uint64_t zoo_seed = 0;
  auto* make_zoo = app.add_subcommand("make-zoo", "Build zoo assets from self-play checkpoints");
  make_zoo->add_option("--ckpt", zoo_ckpts)->required();
  make_zoo->add_option("--env", zoo_env);
  make_zoo->add_option("--episodes", zoo_episodes)->check(CLI::PositiveNumber);
  make_zoo->add_option("--horizon", zoo_horizon);
  make_zoo->add_option("--seed", zoo_seed);
  make_zoo->add_option("--jobs", zoo_jobs);
  make_zoo->add_option("--out", zoo_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(validate_path);
    if (*train) return cmd_train(ta, args);
    if (*evalc) return cmd_eval(ea, args);
    if (*render) return cmd_render(log_path, svg_path);
    if (*rollout) return cmd_rollout(ro_env, ro_policies, ro_seed, ro_horizon, ro_out);
    if (*make_zoo) return cmd_make_zoo(zoo_ckpts, zoo_env, zoo_episodes, zoo_horizon, zoo_seed, zoo_out, zoo_jobs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
