#pragma once

#include "cvrl/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace cvrl {

using Vec2 = Eigen::Vector2d;

// Pixel observation, values in [0,1], quantized to 8-bit levels so replay
// storage is lossless. Layout: index = (y*width + x)*channels + c.
struct Observation {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::VectorXd pixels;

  Eigen::Index size() const { return pixels.size(); }
  double at(int y, int x, int c) const { return pixels[(y * width + x) * channels + c]; }
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

struct DistractorShape {
  Vec2 origin;    // pixel coordinates at phase 0
  Vec2 velocity;  // pixels per frame
  double radius = 0.0;
  double color[3] = {0, 0, 0};
};

// Full underlying POMDP state. Pure data; the env methods are stateless.
struct EnvState {
  Vec2 agent_pos = Vec2::Zero();
  Vec2 agent_vel = Vec2::Zero();
  Vec2 goal_pos = Vec2::Zero();
  int64_t distractor_phase = 0;
  int step_index = 0;
  bool done = false;
  uint64_t episode_seed = 0;
  std::vector<DistractorShape> distractors;  // empty in the standard variant
};

enum class DistractorSeedPolicy { per_episode, fixed };

struct EnvConfig {
  int image_size = 32;  // square, power of two >= 8
  int channels = 3;
  int action_dim = 2;
  int horizon = 100;
  double goal_radius = 0.1;
  bool natural = false;  // moving-distractor background
  int num_distractors = 12;
  DistractorSeedPolicy distractor_seed_policy = DistractorSeedPolicy::per_episode;
  uint64_t distractor_seed = 0;  // used by the `fixed` policy

  // point-mass dynamics (arena coordinates in [-1,1]^2)
  double accel_gain = 0.04;
  double max_speed = 0.08;
  double min_start_separation = 0.8;
};

// Point-mass-to-goal pixel POMDP. Reward is the negative Euclidean distance
// to the goal plus a +1 bonus (episode-terminating) inside the goal radius.
// Fully deterministic given (seed, action sequence); the natural variant
// differs from the standard one only in background pixels.
class ToyEnv {
 public:
  explicit ToyEnv(EnvConfig cfg = {});

  const EnvConfig& config() const { return cfg_; }

  std::pair<EnvState, Observation> reset(uint64_t seed) const;

  // Throws std::logic_error when stepping a finished episode and
  // std::invalid_argument on out-of-range actions.
  std::pair<EnvState, StepResult> step(const EnvState& state, const Eigen::VectorXd& action) const;

  Observation render(const EnvState& state) const;

  // True where the agent or goal blob paints, independent of background.
  std::vector<bool> agent_goal_mask(const EnvState& state) const;

 private:
  void draw_blob(Observation& obs, const Vec2& arena_pos, const double color[3]) const;
  void draw_background(Observation& obs, const EnvState& state) const;
  double blob_radius_px() const { return 0.07 * cfg_.image_size; }

  EnvConfig cfg_;
};

}  // namespace cvrl
