#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rlab/preprocess.hpp"
#include "rlab/rng.hpp"
#include "rlab/tensor.hpp"

namespace rlab {

enum class RunnerAction : std::size_t { noop = 0, jump = 1 };
inline constexpr std::size_t kRunnerActions = 2;

enum class ObstacleKind { cactus, bird };

/// Axis-aligned obstacle in world pixels. `x` is the left edge; `elevation`
/// is the gap between the ground and the obstacle's underside.
struct Obstacle {
  double x = 0.0;
  double width = 0.0;
  double height = 0.0;
  double elevation = 0.0;
  ObstacleKind kind = ObstacleKind::cactus;

  double top() const { return elevation + height; }
};

/// Physics, spawning and rendering constants. All lengths are render pixels,
/// all times are ticks. The defaults are the desk calibration.
struct RunnerConfig {
  std::size_t canvas_height = 168;
  std::size_t canvas_width = 168;
  std::size_t ground_row = 156;  // first row below the ground surface

  double agent_x = 24.0;
  double agent_width = 14.0;
  double agent_height = 22.0;

  double gravity = 0.8;
  double jump_velocity = 9.0;

  double base_speed = 4.0;
  double speed_increment = 0.25;
  std::int64_t speed_interval = 100;
  double max_speed = 10.0;

  double first_obstacle_x = 200.0;
  double gap_min_ticks = 34.0;  // spacing between obstacle left edges, in ticks at the current speed
  double gap_max_ticks = 60.0;
  double cactus_min_width = 6.0;
  double cactus_max_width = 16.0;
  double cactus_min_height = 14.0;
  double cactus_max_height = 28.0;
  double bird_probability = 0.2;
  double bird_width = 18.0;
  double bird_height = 10.0;
  double bird_elevation = 6.0;

  double background_intensity = 0.95;
  double agent_intensity = 0.2;
  double cactus_intensity = 0.3;
  double bird_intensity = 0.35;

  std::int64_t score_divisor = 10;
  /// Episodes longer than this are truncated (not terminal); 0 disables.
  std::int64_t max_ticks = 0;

  void validate() const;
};

struct RunnerState {
  double agent_y = 0.0;
  double vertical_velocity = 0.0;
  std::vector<Obstacle> obstacles;  // sorted by x
  double speed = 0.0;
  std::int64_t tick = 0;
  std::int64_t score = 0;
  bool crashed = false;

  bool grounded() const { return agent_y <= 0.0; }
};

struct StepResult {
  Tensor observation;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
  std::int64_t score = 0;
};

inline constexpr double kCrashReward = -1.0;
inline constexpr double kJumpReward = 0.0;
inline constexpr double kAliveReward = 0.1;

/// Deterministic two-action endless runner. One action per rendered tick;
/// nothing advances between calls to step().
class RunnerEnv {
 public:
  explicit RunnerEnv(RunnerConfig config = {});

  /// Starts a new episode; the first frame fills the whole stack.
  Tensor reset(std::uint64_t seed);

  /// Throws std::logic_error once the episode is over.
  StepResult step(RunnerAction action);
  StepResult step(std::size_t action) { return step(static_cast<RunnerAction>(action)); }

  const RunnerConfig& config() const { return config_; }
  const RunnerState& state() const { return state_; }
  bool done() const { return done_; }
  Tensor observation() const { return stack_.observation(); }

  /// Raw rendered frame of the current state.
  Frame render() const { return render_frame(config_, state_); }
  static Frame render_frame(const RunnerConfig& config, const RunnerState& state);

  /// Horizontal gap between the agent's front and the obstacle's left edge.
  double distance_to_agent(const Obstacle& o) const { return o.x - (config_.agent_x + config_.agent_width); }

  /// Scripted policy with access to the internal state: jumps at the last
  /// tick from which a jump still clears the next obstacle.
  bool oracle_should_jump() const;

 private:
  void spawn_obstacles();
  bool collides() const;
  /// Advances physics by one tick; returns true on collision.
  static bool advance(const RunnerConfig& config, RunnerState& state, bool jump);
  static bool jump_clears(const RunnerConfig& config, RunnerState state);

  RunnerConfig config_;
  RunnerState state_;
  Rng rng_;
  FrameStack stack_;
  bool done_ = true;
};

}  // namespace rlab
