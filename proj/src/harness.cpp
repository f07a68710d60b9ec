#include "rlab/harness.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rlab/checkpoint.hpp"
#include "rlab/preprocess.hpp"

namespace rlab {

void retain_heap_memory() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Independent random streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kAgentStream = 0xA6E7;
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kBaselineStream = 0xBA5E;

std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode) { return mix_seed(seed, episode); }

std::size_t as_count(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && std::floor(d) == d && d < 9.0e18) return static_cast<std::size_t>(d);
  }
  throw std::invalid_argument("config key '" + key + "' expects a non-negative integer, got " + v.dump());
}

double as_real(const std::string& key, const json& v) {
  if (v.is_number()) return v.get<double>();
  throw std::invalid_argument("config key '" + key + "' expects a number, got " + v.dump());
}

bool as_flag(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() || v.is_number_unsigned()) {
    const auto i = v.get<std::int64_t>();
    if (i == 0 || i == 1) return i == 1;
  }
  throw std::invalid_argument("config key '" + key + "' expects true or false, got " + v.dump());
}

std::string as_text(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  throw std::invalid_argument("config key '" + key + "' expects a string, got " + v.dump());
}

struct Setting {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

#define RLAB_COUNT(name, field)                                                                     \
  Setting {                                                                                         \
    name, [](RunConfig& c, const std::string& k, const json& v) { c.field = as_count(k, v); },      \
        [](const RunConfig& c) { return json(c.field); }                                            \
  }
#define RLAB_REAL(name, field)                                                                      \
  Setting {                                                                                         \
    name, [](RunConfig& c, const std::string& k, const json& v) { c.field = as_real(k, v); },       \
        [](const RunConfig& c) { return json(c.field); }                                            \
  }
#define RLAB_TICKS(name, field)                                                                     \
  Setting {                                                                                         \
    name,                                                                                           \
        [](RunConfig& c, const std::string& k, const json& v) {                                     \
          c.field = static_cast<std::int64_t>(as_count(k, v));                                      \
        },                                                                                          \
        [](const RunConfig& c) { return json(c.field); }                                            \
  }

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
      {"algorithm", [](RunConfig& c, const std::string& k, const json& v) {
         c.agent.algorithm = algorithm_from_string(as_text(k, v));
       }, [](const RunConfig& c) { return json(to_string(c.agent.algorithm)); }},
      {"batch_norm", [](RunConfig& c, const std::string& k, const json& v) { c.agent.batch_norm = as_flag(k, v); },
       [](const RunConfig& c) { return json(c.agent.batch_norm); }},
      {"network", [](RunConfig& c, const std::string& k, const json& v) {
         c.agent.network = network_preset_from_string(as_text(k, v));
       }, [](const RunConfig& c) { return json(to_string(c.agent.network)); }},
      {"dueling_mode", [](RunConfig& c, const std::string& k, const json& v) {
         c.agent.dueling_mode = dueling_mode_from_string(as_text(k, v));
       }, [](const RunConfig& c) { return json(to_string(c.agent.dueling_mode)); }},
      {"optimizer", [](RunConfig& c, const std::string& k, const json& v) {
         c.agent.optimizer.kind = optimizer_from_string(as_text(k, v));
       }, [](const RunConfig& c) { return json(to_string(c.agent.optimizer.kind)); }},
      RLAB_REAL("gamma", agent.gamma),
      RLAB_COUNT("batch_size", agent.batch_size),
      RLAB_COUNT("target_sync_steps", agent.target_sync_steps),
      RLAB_REAL("epsilon_initial", agent.epsilon.initial),
      RLAB_REAL("epsilon_final", agent.epsilon.final),
      RLAB_TICKS("explore_steps", agent.epsilon.steps),
      RLAB_REAL("learning_rate", agent.optimizer.learning_rate),
      RLAB_REAL("rmsprop_decay", agent.optimizer.decay),
      RLAB_REAL("rmsprop_epsilon", agent.optimizer.epsilon),
      RLAB_COUNT("warmup_size", agent.warmup_size),
      RLAB_COUNT("train_interval", agent.train_interval),
      RLAB_REAL("per_alpha", agent.per.alpha),
      RLAB_REAL("per_epsilon", agent.per.eps_priority),
      RLAB_REAL("per_beta_initial", agent.per.beta_initial),
      RLAB_TICKS("per_beta_steps", agent.per.beta_anneal_steps),
      RLAB_COUNT("memory_size", memory_capacity),
      RLAB_COUNT("episodes", n_episodes),
      RLAB_COUNT("tune_episodes", tune_episodes),
      RLAB_COUNT("epoch_size", epoch_size),
      {"seed", [](RunConfig& c, const std::string& k, const json& v) { c.seed = as_count(k, v); },
       [](const RunConfig& c) { return json(c.seed); }},
      {"output_dir", [](RunConfig& c, const std::string& k, const json& v) { c.output_dir = as_text(k, v); },
       [](const RunConfig& c) { return json(c.output_dir.string()); }},
      RLAB_COUNT("checkpoint_interval", checkpoint_interval),
      RLAB_TICKS("max_episode_ticks", max_episode_ticks),
      RLAB_TICKS("eval_max_ticks", eval_max_ticks),
      {"record_wall_time", [](RunConfig& c, const std::string& k, const json& v) {
         c.record_wall_time = as_flag(k, v);
       }, [](const RunConfig& c) { return json(c.record_wall_time); }},
      RLAB_COUNT("dump_frames", dump_frames),
  };
  return table;
}

#undef RLAB_COUNT
#undef RLAB_REAL
#undef RLAB_TICKS

std::string join_keys() {
  std::string out;
  for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Tensor::Shape observation_shape() { return {kStackDepth, kObservationSide, kObservationSide}; }

void write_manifest(const RunConfig& config, const fs::path& checkpoint, std::size_t episodes, std::int64_t env_steps,
                    std::int64_t train_steps) {
  json m;
  m["format"] = "rlab-manifest";
  m["version"] = 1;
  m["checkpoint"] = checkpoint.filename().string();
  m["config"] = to_json(config);
  m["observation_shape"] = observation_shape();
  m["n_actions"] = kRunnerActions;
  m["episodes"] = episodes;
  m["env_steps"] = env_steps;
  m["train_steps"] = train_steps;
  write_text(manifest_path(checkpoint), m.dump(2) + "\n");
}

void save_checkpoint(const RunConfig& config, const Network& net, const fs::path& path, std::size_t episodes,
                     std::int64_t env_steps, std::int64_t train_steps) {
  save_network(net, path);
  write_manifest(config, path, episodes, env_steps, train_steps);
}

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper") {
    c.agent.network = NetworkPreset::paper;
    c.agent.batch_size = 128;
    c.agent.gamma = 0.99;
    c.agent.epsilon = {0.1, 1e-4, 100000};
    c.agent.optimizer.learning_rate = 2e-5;
    c.agent.target_sync_steps = 1000;
    c.agent.warmup_size = 0;
    c.agent.train_interval = 1;
    c.memory_capacity = 300000;
    c.n_episodes = 2000;
    c.tune_episodes = 800;
    c.output_dir = "runs/train";
  } else if (name == "desk") {
    c.agent.network = NetworkPreset::desk;
    c.agent.batch_size = 32;
    c.agent.gamma = 0.99;
    c.agent.epsilon = {0.1, 1e-4, 20000};
    c.agent.optimizer.learning_rate = 2.5e-4;
    c.agent.target_sync_steps = 250;
    c.agent.warmup_size = 1000;
    c.agent.train_interval = 4;
    c.memory_capacity = 10000;
    c.n_episodes = 400;
    c.tune_episodes = 80;
    // Short episodes keep a 400-episode run well inside half an hour once
    // the agent survives; evaluation allows ten times as long.
    c.max_episode_ticks = 500;
    c.eval_max_ticks = 5000;
    c.output_dir = "runs/train";
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (expected paper or desk)");
  }
  return c;
}

void RunConfig::validate() const {
  agent.validate();
  env.validate();
  if (memory_capacity < agent.effective_warmup()) {
    throw std::invalid_argument("RunConfig: memory_size must hold at least warmup_size transitions");
  }
  if (n_episodes < 1) throw std::invalid_argument("RunConfig: episodes must be >= 1");
  if (epoch_size < 1) throw std::invalid_argument("RunConfig: epoch_size must be >= 1");
  if (max_episode_ticks < 1 || eval_max_ticks < 1) throw std::invalid_argument("RunConfig: tick caps must be >= 1");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys{"preset"};
  for (const auto& s : settings()) keys.emplace_back(s.key);
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const json& value) {
  if (key == "preset") {
    config = RunConfig::from_preset(as_text(key, value));
    return;
  }
  for (const auto& s : settings()) {
    if (key == s.key) {
      s.set(config, key, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'; valid keys: " + join_keys());
}

void apply_setting_text(RunConfig& config, const std::string& key, const std::string& text) {
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  apply_setting(config, key, value);
}

void apply_json(RunConfig& config, const json& object) {
  if (!object.is_object()) throw std::invalid_argument("config must be a flat JSON object");
  if (object.contains("preset")) apply_setting(config, "preset", object.at("preset"));
  for (const auto& [key, value] : object.items()) {
    if (key == "preset") continue;
    if (value.is_object() || value.is_array()) {
      throw std::invalid_argument("config key '" + key + "' must be a scalar (the format is a flat object)");
    }
    apply_setting(config, key, value);
  }
}

RunConfig load_config_file(const fs::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json object;
  try {
    object = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig config = base;
  apply_json(config, object);
  return config;
}

json to_json(const RunConfig& config) {
  json j;
  j["preset"] = config.preset;
  for (const auto& s : settings()) j[s.key] = s.get(config);
  return j;
}

RunConfig config_from_json(const json& object) {
  RunConfig config = RunConfig::from_preset(object.value("preset", std::string("desk")));
  apply_json(config, object);
  return config;
}

std::string metrics_row(const EpisodeRecord& r) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_time);
  return std::to_string(r.episode) + "," + std::to_string(r.score) + "," + std::to_string(r.steps) + "," +
         format_real(r.epsilon) + "," + format_real(r.mean_loss) + "," + wall;
}

std::string summary_row(const SummaryStats& s) {
  return format_real(s.mean) + "," + format_real(s.std) + "," + format_real(s.min) + "," + format_real(s.max) +
         "," + format_real(s.p25) + "," + format_real(s.p50) + "," + format_real(s.p75);
}

void write_summary_csv(const SummaryStats& stats, const fs::path& path) {
  write_text(path, std::string(kSummaryHeader) + "\n" + summary_row(stats) + "\n");
}

std::vector<double> TrainResult::scores() const {
  std::vector<double> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(static_cast<double>(e.score));
  return out;
}

fs::path manifest_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".manifest.json");
  return p;
}

TrainResult cmd_train(const RunConfig& config, const EpisodeCallback& on_episode) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.run_dir = config.output_dir;
  fs::create_directories(result.run_dir);
  write_text(result.run_dir / "config.json", to_json(config).dump(2) + "\n");

  RunnerConfig env_config = config.env;
  env_config.max_ticks = config.max_episode_ticks;
  RunnerEnv env(env_config);
  Rng init_rng(mix_seed(config.seed, kInitStream));
  Rng rng(mix_seed(config.seed, kAgentStream));
  Agent agent(config.agent, build_network(config.agent, observation_shape(), kRunnerActions, init_rng),
              config.memory_capacity);

  std::ofstream metrics(result.run_dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + (result.run_dir / "metrics.csv").string());
  metrics << kMetricsHeader << "\n";

  const fs::path frame_dir = result.run_dir / "frames";
  if (config.dump_frames > 0) fs::create_directories(frame_dir);

  std::int64_t step = 0;
  for (std::size_t episode = 0; episode < config.n_episodes; ++episode) {
    Tensor obs = env.reset(episode_seed(config.seed, episode));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::size_t steps = 0;
    StepResult res;
    do {
      const std::size_t action = agent.act(obs, step, rng);
      res = env.step(action);
      ++step;
      ++steps;
      agent.remember({obs, action, res.observation, res.reward, res.terminal});
      if (static_cast<std::size_t>(step) % config.agent.train_interval == 0) {
        const TrainStats stats = agent.train_step(rng);
        if (stats.status == TrainStats::Status::trained) {
          loss_sum += stats.loss;
          ++loss_count;
        }
      }
      if (episode == 0 && steps <= config.dump_frames) {
        char name[32];
        const Frame raw = env.render();
        std::snprintf(name, sizeof name, "raw_%05zu.pgm", steps);
        write_pgm(raw, frame_dir / name);
        std::snprintf(name, sizeof name, "obs_%05zu.pgm", steps);
        write_pgm(preprocess(raw), frame_dir / name);
      }
      obs = std::move(res.observation);
    } while (!res.terminal && !res.truncated);

    EpisodeRecord record;
    record.episode = episode;
    record.score = res.score;
    record.steps = steps;
    record.epsilon = agent.epsilon(step);
    record.mean_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count)
                                      : std::numeric_limits<double>::quiet_NaN();
    if (config.record_wall_time) {
      record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    metrics << metrics_row(record) << "\n" << std::flush;
    result.episodes.push_back(record);
    if (on_episode) on_episode(record);

    if (config.checkpoint_interval > 0 && (episode + 1) % config.checkpoint_interval == 0 &&
        episode + 1 < config.n_episodes) {
      char name[40];
      std::snprintf(name, sizeof name, "checkpoint_ep%06zu.bin", episode + 1);
      save_checkpoint(config, agent.policy(), result.run_dir / name, episode + 1, step, agent.train_steps());
    }
  }

  result.env_steps = step;
  result.train_steps = agent.train_steps();
  result.checkpoint = result.run_dir / "checkpoint.bin";
  save_checkpoint(config, agent.policy(), result.checkpoint, config.n_episodes, step, agent.train_steps());
  write_summary_csv(summarize(result.scores()), result.run_dir / "summary.csv");
  return result;
}

TuneResult cmd_tune(const RunConfig& base, const std::string& key, const std::vector<std::string>& values,
                    const EpisodeCallback& on_episode) {
  if (values.empty()) throw std::invalid_argument("tune: no values given");
  if (key == "preset" || key == "output_dir" || key == "seed") {
    throw std::invalid_argument("tune: '" + key + "' is not a hyperparameter; valid keys: " + join_keys());
  }
  // Reject an unknown key or a bad value before any run starts.
  for (const auto& v : values) {
    RunConfig probe = base;
    apply_setting_text(probe, key, v);
    probe.validate();
  }

  TuneResult result;
  for (const auto& v : values) {
    RunConfig run = base;
    apply_setting_text(run, key, v);
    const std::string label = key + "=" + v;
    run.output_dir = base.output_dir / label;
    const TrainResult trained = cmd_train(run, on_episode);
    result.labels.push_back(label);
    result.epoch_means.push_back(epoch_means(trained.scores(), run.epoch_size));
  }

  std::size_t epochs = 0;
  for (const auto& m : result.epoch_means) epochs = std::max(epochs, m.size());
  std::ostringstream csv;
  csv << "epoch";
  for (const auto& label : result.labels) csv << "," << label;
  csv << "\n";
  for (std::size_t e = 0; e < epochs; ++e) {
    csv << e + 1;
    for (const auto& m : result.epoch_means) csv << "," << (e < m.size() ? format_real(m[e]) : "");
    csv << "\n";
  }
  fs::create_directories(base.output_dir);
  result.comparison = base.output_dir / "comparison.csv";
  write_text(result.comparison, csv.str());
  return result;
}

EvalResult evaluate_network(Network& net, const RunnerConfig& env_config, std::size_t n_episodes,
                            std::uint64_t seed, std::int64_t max_ticks, const ActionProbe& probe) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  RunnerConfig cfg = env_config;
  cfg.max_ticks = max_ticks;
  RunnerEnv env(cfg);
  const std::uint64_t eval_seed = mix_seed(seed, kEvalStream);
  EvalResult result;
  for (std::size_t episode = 0; episode < n_episodes; ++episode) {
    Tensor obs = env.reset(episode_seed(eval_seed, episode));
    StepResult res;
    std::size_t steps = 0;
    do {
      Tensor::Shape shape{1};
      shape.insert(shape.end(), obs.shape().begin(), obs.shape().end());
      const Tensor q = net.forward(obs.reshaped(shape), Mode::infer);
      const std::size_t action = argmax(q.data());
      if (probe) probe(q.data(), action);
      res = env.step(action);
      ++steps;
      obs = std::move(res.observation);
    } while (!res.terminal && !res.truncated);
    result.scores.push_back(static_cast<double>(res.score));
    result.steps.push_back(steps);
  }
  result.stats = summarize(result.scores);
  return result;
}

Network load_checkpointed_network(const fs::path& checkpoint, RunConfig* config_out) {
  const fs::path mpath = manifest_path(checkpoint);
  std::ifstream in(mpath);
  if (!in) throw CheckpointError("missing manifest " + mpath.string() + " for checkpoint " + checkpoint.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CheckpointError("manifest " + mpath.string() + " is not valid JSON: " + e.what());
  }
  if (manifest.value("format", std::string()) != "rlab-manifest" || !manifest.contains("config")) {
    throw CheckpointError("manifest " + mpath.string() + " is not an rlab manifest");
  }
  RunConfig config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("manifest config rejected: ") + e.what());
  }
  const auto shape = manifest.value("observation_shape", std::vector<std::size_t>{});
  if (shape != observation_shape() || manifest.value("n_actions", std::size_t{0}) != kRunnerActions) {
    throw CheckpointError("manifest observation shape or action count does not match this environment");
  }
  Rng rng(0);
  Network net = build_network(config.agent, observation_shape(), kRunnerActions, rng);
  try {
    load_network(net, checkpoint);
  } catch (const CheckpointError& e) {
    throw CheckpointError(std::string("checkpoint does not match its manifest (algorithm ") +
                          to_string(config.agent.algorithm) + ", network " + to_string(config.agent.network) +
                          (config.agent.batch_norm ? ", batch norm" : "") + "): " + e.what());
  }
  if (config_out) *config_out = config;
  return net;
}

EvalResult cmd_eval(const EvalOptions& options, const ActionProbe& probe) {
  RunConfig config;
  Network net = load_checkpointed_network(options.checkpoint, &config);
  EvalResult result = evaluate_network(net, config.env, options.n_episodes, options.seed, config.eval_max_ticks, probe);
  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    std::ostringstream csv;
    csv << "episode,score,steps\n";
    for (std::size_t i = 0; i < result.scores.size(); ++i) {
      csv << i << "," << static_cast<std::int64_t>(result.scores[i]) << "," << result.steps[i] << "\n";
    }
    write_text(options.output_dir / "eval_scores.csv", csv.str());
    write_summary_csv(result.stats, options.output_dir / "summary.csv");
  }
  return result;
}

std::vector<double> baseline_scores(const RunnerConfig& env_config, ScriptedPolicy policy, std::size_t n_episodes,
                                    std::uint64_t seed, std::int64_t max_ticks) {
  RunnerConfig cfg = env_config;
  cfg.max_ticks = max_ticks;
  RunnerEnv env(cfg);
  Rng rng(mix_seed(seed, kBaselineStream));
  std::vector<double> scores;
  for (std::size_t episode = 0; episode < n_episodes; ++episode) {
    env.reset(episode_seed(seed, episode));
    StepResult res;
    do {
      std::size_t action = 0;
      if (policy == ScriptedPolicy::random) action = rng.index(kRunnerActions);
      if (policy == ScriptedPolicy::oracle) action = env.oracle_should_jump() ? 1 : 0;
      res = env.step(action);
    } while (!res.terminal && !res.truncated);
    scores.push_back(static_cast<double>(res.score));
  }
  return scores;
}

CliffResult cmd_cliff(const CliffOptions& options) {
  if (options.algo != "sarsa" && options.algo != "qlearning") {
    throw std::invalid_argument("cliff: unknown algorithm '" + options.algo + "' (expected sarsa or qlearning)");
  }
  TdParams params;
  params.alpha = options.alpha;
  params.gamma = options.gamma;
  params.n_episodes = options.episodes;
  const double final_eps = options.epsilon_final < 0.0 ? options.epsilon : options.epsilon_final;
  params.epsilon = {options.epsilon, final_eps, static_cast<std::int64_t>(std::max<std::size_t>(options.episodes, 1))};
  params.validate();

  GridWorldEnv env(GridWorld::cliff_walking());
  Rng rng(options.seed);
  CliffResult result;
  result.q = options.algo == "sarsa" ? sarsa_train(env, params, rng) : q_learning_train(env, params, rng);
  result.rollout = greedy_rollout(env, result.q, rng);
  result.grid = render_path(env.world(), result.rollout);
  return result;
}

}  // namespace rlab
