// Command-line front end: train, tune, eval and cliff.
//
// Configuration precedence for train and tune, lowest first:
//   preset defaults < RL_SEED < --config file < flags < --set KEY=VALUE
// The preset is --preset, else the file's "preset" key, else desk.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlab/checkpoint.hpp"
#include "rlab/harness.hpp"

namespace {

using rlab::RunConfig;

struct TrainFlags {
  std::string algo;
  bool bn = false;
  std::string preset;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  std::string out;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--algo", f.algo, "dqn, double, dueling or dqn-per")
      ->check(CLI::IsMember({"dqn", "double", "dueling", "dqn-per"}));
  cmd->add_flag("--bn", f.bn, "insert batch normalisation after each convolution");
  cmd->add_option("--preset", f.preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--config", f.config_file, "flat JSON object of config keys")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "run seed (falls back to RL_SEED)");
  cmd->add_option("--episodes", f.episodes, "number of training episodes");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.sets, "override any config key, KEY=VALUE (repeatable)");
  cmd->add_flag("--quiet", f.quiet, "no per-epoch progress lines");
}

std::optional<std::uint64_t> env_seed() {
  const char* text = std::getenv("RL_SEED");
  if (text == nullptr || *text == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != std::string(text).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("RL_SEED must be a non-negative integer, got '") + text + "'");
  }
}

RunConfig resolve_config(const TrainFlags& f) {
  nlohmann::json file = nlohmann::json::object();
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("config file " + f.config_file + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw std::invalid_argument("config file must hold a flat JSON object");
  }
  std::string preset = "desk";
  if (!f.preset.empty()) {
    preset = f.preset;
  } else if (file.contains("preset")) {
    preset = file.at("preset").get<std::string>();
  }
  RunConfig config = RunConfig::from_preset(preset);
  if (auto s = env_seed()) config.seed = *s;
  file.erase("preset");
  rlab::apply_json(config, file);

  if (!f.algo.empty()) config.agent.algorithm = rlab::algorithm_from_string(f.algo);
  if (f.bn) config.agent.batch_norm = true;
  if (f.seed) config.seed = *f.seed;
  if (f.episodes) config.n_episodes = *f.episodes;
  if (!f.out.empty()) config.output_dir = f.out;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects KEY=VALUE, got '" + kv + "'");
    rlab::apply_setting_text(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

rlab::EpisodeCallback progress(const RunConfig& config, bool quiet) {
  if (quiet) return {};
  auto scores = std::make_shared<std::vector<double>>();
  return [scores, epoch = config.epoch_size](const rlab::EpisodeRecord& r) {
    scores->push_back(static_cast<double>(r.score));
    if (scores->size() % epoch != 0) return;
    double sum = 0.0;
    for (std::size_t i = scores->size() - epoch; i < scores->size(); ++i) sum += (*scores)[i];
    std::fprintf(stderr, "episode %6zu  epoch mean score %8.2f  epsilon %.5f  loss %.6g  %.1fs\n", r.episode + 1,
                 sum / static_cast<double>(epoch), r.epsilon, r.mean_loss, r.wall_time);
  };
}

void print_summary(const rlab::SummaryStats& s) {
  std::printf("%10s %10s %10s %10s %10s %10s %10s\n", "mean", "std", "min", "max", "25%", "50%", "75%");
  std::printf("%10.2f %10.2f %10.2f %10.2f %10.2f %10.2f %10.2f\n", s.mean, s.std, s.min, s.max, s.p25, s.p50,
              s.p75);
}

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item.empty()) throw std::invalid_argument("--values contains an empty item");
    out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep Q-learning experiments on an endless-runner game"};
  app.require_subcommand(1);
  rlab::retain_heap_memory();

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train an agent and write metrics, summary and checkpoint");
  add_train_flags(train, train_flags);

  TrainFlags tune_flags;
  std::string tune_param, tune_values;
  auto* tune = app.add_subcommand("tune", "one training run per value of a single hyperparameter");
  tune->add_option("--param", tune_param, "config key to vary")->required();
  tune->add_option("--values", tune_values, "comma-separated values")->required();
  add_train_flags(tune, tune_flags);

  rlab::EvalOptions eval_opts;
  std::optional<std::uint64_t> eval_seed;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", eval_opts.n_episodes, "number of greedy episodes")->capture_default_str();
  eval->add_option("--seed", eval_seed, "evaluation seed (falls back to RL_SEED)");
  eval->add_option("--out", eval_out, "directory for eval_scores.csv and summary.csv");

  rlab::CliffOptions cliff_opts;
  auto* cliff = app.add_subcommand("cliff", "tabular Sarsa or Q-learning on the cliff-walking grid");
  cliff->add_option("--algo", cliff_opts.algo, "sarsa or qlearning")
      ->check(CLI::IsMember({"sarsa", "qlearning"}))
      ->capture_default_str();
  cliff->add_option("--alpha", cliff_opts.alpha, "step size")->capture_default_str();
  cliff->add_option("--gamma", cliff_opts.gamma, "discount")->capture_default_str();
  cliff->add_option("--epsilon", cliff_opts.epsilon, "exploration rate (initial, if --epsilon-final is given)")
      ->capture_default_str();
  cliff->add_option("--epsilon-final", cliff_opts.epsilon_final, "decay epsilon linearly to this by the last episode");
  cliff->add_option("--episodes", cliff_opts.episodes, "training episodes")->capture_default_str();
  cliff->add_option("--seed", cliff_opts.seed, "seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const RunConfig config = resolve_config(train_flags);
      const auto result = rlab::cmd_train(config, progress(config, train_flags.quiet));
      print_summary(rlab::summarize(result.scores()));
      std::printf("run directory: %s\n", result.run_dir.string().c_str());
    } else if (*tune) {
      RunConfig config = resolve_config(tune_flags);
      if (!tune_flags.episodes) config.n_episodes = config.tune_episodes;
      const auto result = rlab::cmd_tune(config, tune_param, split_values(tune_values),
                                         progress(config, tune_flags.quiet));
      for (std::size_t i = 0; i < result.labels.size(); ++i) {
        double sum = 0.0;
        for (double m : result.epoch_means[i]) sum += m;
        std::printf("%-28s mean epoch score %.2f\n", result.labels[i].c_str(),
                    sum / static_cast<double>(result.epoch_means[i].size()));
      }
      std::printf("comparison: %s\n", result.comparison.string().c_str());
    } else if (*eval) {
      if (eval_seed) {
        eval_opts.seed = *eval_seed;
      } else if (auto s = env_seed()) {
        eval_opts.seed = *s;
      }
      eval_opts.output_dir = eval_out;
      const auto result = rlab::cmd_eval(eval_opts);
      std::printf("%zu greedy episodes\n", result.scores.size());
      print_summary(result.stats);
    } else if (*cliff) {
      const auto result = rlab::cmd_cliff(cliff_opts);
      std::printf("%s", result.grid.c_str());
      std::printf("return %.0f  path length %zu%s\n", result.rollout.total_return, result.rollout.length(),
                  result.rollout.reached_terminal ? "" : "  (goal not reached)");
    }
  } catch (const rlab::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
