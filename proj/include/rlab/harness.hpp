#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlab/agent.hpp"
#include "rlab/runner_env.hpp"
#include "rlab/stats.hpp"
#include "rlab/tabular.hpp"

namespace rlab {

/// Keeps freed batch-sized blocks in the heap (glibc only) so that the
/// buffers allocated on every training step do not page-fault afresh.
void retain_heap_memory();

/// Everything a training run depends on. Presets supply defaults, a flat
/// JSON file overrides them, and command-line flags override the file.
struct RunConfig {
  std::string preset = "desk";
  AgentConfig agent;
  RunnerConfig env;
  std::size_t memory_capacity = 10000;
  std::size_t n_episodes = 400;
  std::size_t tune_episodes = 80;
  std::size_t epoch_size = 10;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/train";
  /// Episodes between intermediate checkpoints; 0 writes only the final one.
  std::size_t checkpoint_interval = 0;
  /// Training episodes are truncated (not terminal) after this many ticks.
  std::int64_t max_episode_ticks = 20000;
  /// Greedy evaluation episodes are capped at this many ticks.
  std::int64_t eval_max_ticks = 20000;
  /// When false the wall_time column is written as 0 so that identical
  /// seeds give byte-identical metrics files.
  bool record_wall_time = true;
  /// Number of steps of the first episode to dump as PGM frames (raw and
  /// preprocessed); 0 disables.
  std::size_t dump_frames = 0;

  static RunConfig from_preset(const std::string& name);
  void validate() const;
};

/// Keys accepted in config files, by --set and by tune.
std::vector<std::string> config_keys();

/// Throws std::invalid_argument naming the valid keys for an unknown key,
/// or describing the expected type for a bad value.
void apply_setting(RunConfig& config, const std::string& key, const nlohmann::json& value);
/// String form used on the command line: numbers, true/false, or text.
void apply_setting_text(RunConfig& config, const std::string& key, const std::string& text);
/// Applies every key of a flat JSON object. A "preset" key, if present, is
/// applied first and resets the other fields to that preset.
void apply_json(RunConfig& config, const nlohmann::json& object);
RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base);
nlohmann::json to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& object);

struct EpisodeRecord {
  std::size_t episode = 0;
  std::int64_t score = 0;
  std::size_t steps = 0;
  double epsilon = 0.0;
  double mean_loss = 0.0;  // NaN when no optimisation step ran
  double wall_time = 0.0;  // seconds since the run started
};

inline constexpr const char* kMetricsHeader = "episode,score,steps,epsilon,loss_mean,wall_time";
inline constexpr const char* kSummaryHeader = "mean,std,min,max,p25,p50,p75";

std::string metrics_row(const EpisodeRecord& record);
std::string summary_row(const SummaryStats& stats);
void write_summary_csv(const SummaryStats& stats, const std::filesystem::path& path);

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;
  std::vector<EpisodeRecord> episodes;
  std::int64_t env_steps = 0;
  std::int64_t train_steps = 0;

  std::vector<double> scores() const;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// Trains the configured variant and writes metrics.csv, summary.csv,
/// config.json, checkpoint.bin and its manifest into config.output_dir.
TrainResult cmd_train(const RunConfig& config, const EpisodeCallback& on_episode = {});

struct TuneResult {
  std::vector<std::string> labels;              // "key=value" per run
  std::vector<std::vector<double>> epoch_means;  // per run
  std::filesystem::path comparison;
};

/// One training run per value with everything else fixed, each in
/// output_dir/"key=value"; comparison.csv holds per-epoch mean scores.
TuneResult cmd_tune(const RunConfig& base, const std::string& key, const std::vector<std::string>& values,
                    const EpisodeCallback& on_episode = {});

/// Sees the action values and the chosen action of every evaluation step.
using ActionProbe = std::function<void(std::span<const double> q, std::size_t action)>;

struct EvalResult {
  std::vector<double> scores;
  std::vector<std::size_t> steps;
  SummaryStats stats;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::size_t n_episodes = 30;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;  // empty: write nothing
};

/// Greedy play (no exploration, batch norm in inference mode) on episodes
/// seeded independently of training.
EvalResult evaluate_network(Network& net, const RunnerConfig& env, std::size_t n_episodes, std::uint64_t seed,
                            std::int64_t max_ticks, const ActionProbe& probe = {});

/// Loads a checkpoint with its manifest, evaluates it and writes
/// eval_scores.csv and summary.csv. A checkpoint that does not fit the
/// manifest's network is rejected with CheckpointError.
EvalResult cmd_eval(const EvalOptions& options, const ActionProbe& probe = {});

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);
/// Rebuilds the run configuration and network recorded for a checkpoint and
/// loads its weights.
Network load_checkpointed_network(const std::filesystem::path& checkpoint, RunConfig* config_out = nullptr);

enum class ScriptedPolicy { noop, random, oracle };

/// Scores of a fixed policy on the same per-episode seeds cmd_train uses.
std::vector<double> baseline_scores(const RunnerConfig& env, ScriptedPolicy policy, std::size_t n_episodes,
                                    std::uint64_t seed, std::int64_t max_ticks);

struct CliffOptions {
  std::string algo = "qlearning";
  double alpha = 0.5;
  double gamma = 1.0;
  double epsilon = 0.1;
  /// Epsilon reached linearly by the last episode; negative keeps it fixed.
  double epsilon_final = -1.0;
  std::size_t episodes = 500;
  std::uint64_t seed = 0;
};

struct CliffResult {
  Rollout rollout;
  std::string grid;
  QTable q;
};

CliffResult cmd_cliff(const CliffOptions& options);

}  // namespace rlab
