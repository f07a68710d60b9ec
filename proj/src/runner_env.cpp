#include "rlab/runner_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlab {

void RunnerConfig::validate() const {
  if (canvas_height < 16 || canvas_width < 16) throw std::invalid_argument("RunnerConfig: canvas too small");
  if (ground_row > canvas_height || ground_row < agent_height) throw std::invalid_argument("RunnerConfig: bad ground_row");
  if (!(gravity > 0.0) || !(jump_velocity > 0.0)) throw std::invalid_argument("RunnerConfig: gravity and jump must be positive");
  if (!(base_speed > 0.0) || max_speed < base_speed || speed_increment < 0.0 || speed_interval < 1) {
    throw std::invalid_argument("RunnerConfig: bad speed settings");
  }
  if (!(gap_min_ticks > 0.0) || gap_max_ticks < gap_min_ticks) throw std::invalid_argument("RunnerConfig: bad gap range");
  if (cactus_max_width < cactus_min_width || cactus_max_height < cactus_min_height) {
    throw std::invalid_argument("RunnerConfig: bad cactus ranges");
  }
  if (!(bird_probability >= 0.0 && bird_probability <= 1.0)) throw std::invalid_argument("RunnerConfig: bad bird probability");
  if (bird_elevation >= agent_height) {
    throw std::invalid_argument("RunnerConfig: birds must fly low enough to require a jump");
  }
  if (score_divisor < 1) throw std::invalid_argument("RunnerConfig: score_divisor must be >= 1");
  if (max_ticks < 0) throw std::invalid_argument("RunnerConfig: max_ticks must be >= 0");
}

RunnerEnv::RunnerEnv(RunnerConfig config) : config_(config) { config_.validate(); }

Tensor RunnerEnv::reset(std::uint64_t seed) {
  rng_ = Rng(mix_seed(seed, 0x52554e4e4552ULL));
  state_ = RunnerState{};
  state_.speed = config_.base_speed;
  state_.obstacles.push_back({config_.first_obstacle_x, config_.cactus_min_width + 4.0,
                              0.5 * (config_.cactus_min_height + config_.cactus_max_height), 0.0,
                              ObstacleKind::cactus});
  spawn_obstacles();
  stack_.clear();
  stack_.push(preprocess(render()));
  done_ = false;
  return stack_.observation();
}

void RunnerEnv::spawn_obstacles() {
  // Keep obstacles generated well beyond the visible canvas so the oracle's
  // lookahead never depends on future random draws.
  const double horizon = static_cast<double>(config_.canvas_width) + config_.gap_max_ticks * config_.max_speed;
  while (state_.obstacles.empty() || state_.obstacles.back().x < horizon) {
    const double last = state_.obstacles.empty() ? config_.first_obstacle_x : state_.obstacles.back().x;
    const double gap = state_.speed * rng_.uniform(config_.gap_min_ticks, config_.gap_max_ticks);
    Obstacle o;
    o.x = last + gap;
    if (rng_.uniform() < config_.bird_probability) {
      o.kind = ObstacleKind::bird;
      o.width = config_.bird_width;
      o.height = config_.bird_height;
      o.elevation = config_.bird_elevation;
    } else {
      o.kind = ObstacleKind::cactus;
      o.width = std::round(rng_.uniform(config_.cactus_min_width, config_.cactus_max_width));
      o.height = std::round(rng_.uniform(config_.cactus_min_height, config_.cactus_max_height));
    }
    state_.obstacles.push_back(o);
  }
}

bool RunnerEnv::advance(const RunnerConfig& config, RunnerState& state, bool jump) {
  if (jump && state.grounded()) state.vertical_velocity = config.jump_velocity;
  state.agent_y += state.vertical_velocity;
  state.vertical_velocity -= config.gravity;
  if (state.agent_y <= 0.0) {
    state.agent_y = 0.0;
    state.vertical_velocity = 0.0;
  }
  for (Obstacle& o : state.obstacles) o.x -= state.speed;
  std::erase_if(state.obstacles, [](const Obstacle& o) { return o.x + o.width < 0.0; });
  ++state.tick;
  if (state.tick % config.speed_interval == 0) {
    state.speed = std::min(config.max_speed, state.speed + config.speed_increment);
  }
  const double left = config.agent_x, right = config.agent_x + config.agent_width;
  const double bottom = state.agent_y, top = state.agent_y + config.agent_height;
  for (const Obstacle& o : state.obstacles) {
    if (o.x >= right) break;
    if (o.x + o.width > left && bottom < o.top() && top > o.elevation) return true;
  }
  return false;
}

StepResult RunnerEnv::step(RunnerAction action) {
  if (done_) throw std::logic_error("RunnerEnv::step: episode is over; call reset()");
  if (static_cast<std::size_t>(action) >= kRunnerActions) throw std::invalid_argument("RunnerEnv::step: unknown action");
  const bool jump = action == RunnerAction::jump;
  const bool crashed = advance(config_, state_, jump);
  spawn_obstacles();
  state_.crashed = crashed;
  if (!crashed) state_.score = state_.tick / config_.score_divisor;
  stack_.push(preprocess(render()));

  StepResult result;
  result.observation = stack_.observation();
  result.terminal = crashed;
  result.reward = crashed ? kCrashReward : (jump ? kJumpReward : kAliveReward);
  result.truncated = !crashed && config_.max_ticks > 0 && state_.tick >= config_.max_ticks;
  result.score = state_.score;
  done_ = result.terminal || result.truncated;
  return result;
}

Frame RunnerEnv::render_frame(const RunnerConfig& config, const RunnerState& state) {
  Frame frame(config.canvas_height, config.canvas_width, config.background_intensity);
  const auto ground = static_cast<double>(config.ground_row);
  auto fill = [&](double x, double width, double elevation, double height, double value) {
    const auto c0 = static_cast<std::ptrdiff_t>(std::lround(x));
    const auto c1 = static_cast<std::ptrdiff_t>(std::lround(x + width));
    const auto r0 = static_cast<std::ptrdiff_t>(std::lround(ground - elevation - height));
    const auto r1 = static_cast<std::ptrdiff_t>(std::lround(ground - elevation));
    for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(r0, 0); r < std::min<std::ptrdiff_t>(r1, frame.height); ++r) {
      for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(c0, 0); c < std::min<std::ptrdiff_t>(c1, frame.width); ++c) {
        frame.at(r, c) = value;
      }
    }
  };
  for (const Obstacle& o : state.obstacles) {
    if (o.x >= static_cast<double>(config.canvas_width)) break;
    fill(o.x, o.width, o.elevation, o.height,
         o.kind == ObstacleKind::bird ? config.bird_intensity : config.cactus_intensity);
  }
  fill(config.agent_x, config.agent_width, state.agent_y, config.agent_height, config.agent_intensity);
  return frame;
}

bool RunnerEnv::jump_clears(const RunnerConfig& config, RunnerState state) {
  if (!state.grounded()) return false;
  // The jump must carry the agent past the nearest obstacle still ahead of
  // its back edge; landing short of it does not count.
  const auto next = std::find_if(state.obstacles.begin(), state.obstacles.end(),
                                 [&](const Obstacle& o) { return o.x + o.width > config.agent_x; });
  if (next == state.obstacles.end()) return true;
  const double right_edge = next->x + next->width;
  double shift = state.speed;
  if (advance(config, state, true)) return false;
  while (!state.grounded()) {
    shift += state.speed;
    if (advance(config, state, false)) return false;
  }
  return right_edge - shift <= config.agent_x;
}

bool RunnerEnv::oracle_should_jump() const {
  if (done_ || !state_.grounded()) return false;
  if (!jump_clears(config_, state_)) return false;
  RunnerState wait = state_;
  if (advance(config_, wait, false)) return true;
  return !jump_clears(config_, wait);
}

}  // namespace rlab
