#include "cvrl/env.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

namespace {

double quantize8(double v) { return std::round(v * 255.0) / 255.0; }

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// reflective fold into [0, limit)
double fold(double p, double limit) {
  const double period = 2.0 * limit;
  double m = std::fmod(p, period);
  if (m < 0) m += period;
  return m < limit ? m : period - m - 1e-9;
}

}  // namespace

ToyEnv::ToyEnv(EnvConfig cfg) : cfg_(cfg) {
  if (cfg_.image_size < 8 || (cfg_.image_size & (cfg_.image_size - 1)) != 0)
    throw std::invalid_argument("ToyEnv: image_size must be a power of two >= 8");
  if (cfg_.channels != 3) throw std::invalid_argument("ToyEnv: only 3-channel images supported");
  if (cfg_.horizon < 1) throw std::invalid_argument("ToyEnv: horizon must be >= 1");
}

std::pair<EnvState, Observation> ToyEnv::reset(uint64_t seed) const {
  EnvState s;
  s.episode_seed = seed;

  Rng pose_rng(derive_seed(seed, "env.pose"));
  s.agent_pos = Vec2(pose_rng.uniform(-0.8, 0.8), pose_rng.uniform(-0.8, 0.8));
  s.agent_vel = Vec2::Zero();
  do {
    s.goal_pos = Vec2(pose_rng.uniform(-0.8, 0.8), pose_rng.uniform(-0.8, 0.8));
  } while ((s.goal_pos - s.agent_pos).norm() < cfg_.min_start_separation);

  if (cfg_.natural) {
    const uint64_t stream_seed = cfg_.distractor_seed_policy == DistractorSeedPolicy::per_episode
                                     ? derive_seed(seed, "env.distractor")
                                     : derive_seed(cfg_.distractor_seed, "env.distractor");
    Rng drng(stream_seed);
    s.distractors.resize(cfg_.num_distractors);
    const double sz = cfg_.image_size;
    for (auto& d : s.distractors) {
      d.origin = Vec2(drng.uniform(0.0, sz), drng.uniform(0.0, sz));
      const double speed = drng.uniform(0.5, 2.0);
      const double angle = drng.uniform(0.0, 2.0 * M_PI);
      d.velocity = speed * Vec2(std::cos(angle), std::sin(angle));
      d.radius = drng.uniform(0.09 * sz, 0.25 * sz);
      for (auto& c : d.color) c = drng.uniform(0.05, 1.0);
    }
  }
  return {s, render(s)};
}

std::pair<EnvState, StepResult> ToyEnv::step(const EnvState& state,
                                             const Eigen::VectorXd& action) const {
  if (state.done)
    throw std::logic_error("ToyEnv::step: episode is done; reset before stepping again");
  if (action.size() != cfg_.action_dim)
    throw std::invalid_argument("ToyEnv::step: action dimension mismatch");
  for (Eigen::Index i = 0; i < action.size(); ++i)
    if (!(action[i] >= -1.0 - 1e-12 && action[i] <= 1.0 + 1e-12))
      throw std::invalid_argument("ToyEnv::step: action component outside [-1,1]");

  EnvState next = state;
  // explicit Euler: position advances with the pre-update velocity
  next.agent_pos.x() = clampd(state.agent_pos.x() + state.agent_vel.x(), -1.0, 1.0);
  next.agent_pos.y() = clampd(state.agent_pos.y() + state.agent_vel.y(), -1.0, 1.0);
  next.agent_vel.x() =
      clampd(state.agent_vel.x() + cfg_.accel_gain * action[0], -cfg_.max_speed, cfg_.max_speed);
  next.agent_vel.y() =
      clampd(state.agent_vel.y() + cfg_.accel_gain * action[1], -cfg_.max_speed, cfg_.max_speed);
  next.step_index = state.step_index + 1;
  if (cfg_.natural) next.distractor_phase = state.distractor_phase + 1;

  const double dist = (next.agent_pos - state.goal_pos).norm();
  const bool reached = dist <= cfg_.goal_radius;
  StepResult result;
  result.reward = -dist + (reached ? 1.0 : 0.0);
  result.done = reached || next.step_index >= cfg_.horizon;
  next.done = result.done;
  result.observation = render(next);
  return {next, result};
}

void ToyEnv::draw_background(Observation& obs, const EnvState& state) const {
  const int sz = cfg_.image_size;
  if (!cfg_.natural) {
    // static slate background, identical in every episode
    for (int i = 0; i < sz * sz; ++i) {
      obs.pixels[i * 3 + 0] = 0.32;
      obs.pixels[i * 3 + 1] = 0.34;
      obs.pixels[i * 3 + 2] = 0.40;
    }
    return;
  }
  for (int i = 0; i < sz * sz; ++i) {
    obs.pixels[i * 3 + 0] = 0.08;
    obs.pixels[i * 3 + 1] = 0.08;
    obs.pixels[i * 3 + 2] = 0.10;
  }
  const double phase = static_cast<double>(state.distractor_phase);
  for (const auto& d : state.distractors) {
    const double cx = fold(d.origin.x() + d.velocity.x() * phase, sz);
    const double cy = fold(d.origin.y() + d.velocity.y() * phase, sz);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - d.radius)));
    const int x1 = std::min(sz - 1, static_cast<int>(std::ceil(cx + d.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - d.radius)));
    const int y1 = std::min(sz - 1, static_cast<int>(std::ceil(cy + d.radius)));
    const double r2 = d.radius * d.radius;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          double* px = obs.pixels.data() + (y * sz + x) * 3;
          px[0] = d.color[0];
          px[1] = d.color[1];
          px[2] = d.color[2];
        }
      }
    }
  }
}

void ToyEnv::draw_blob(Observation& obs, const Vec2& arena_pos, const double color[3]) const {
  const int sz = cfg_.image_size;
  const double cx = (arena_pos.x() + 1.0) * 0.5 * (sz - 1);
  const double cy = (arena_pos.y() + 1.0) * 0.5 * (sz - 1);
  const double r = blob_radius_px();
  const double r2 = r * r;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(sz - 1, static_cast<int>(std::ceil(cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(sz - 1, static_cast<int>(std::ceil(cy + r)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        double* px = obs.pixels.data() + (y * sz + x) * 3;
        px[0] = color[0];
        px[1] = color[1];
        px[2] = color[2];
      }
    }
  }
}

Observation ToyEnv::render(const EnvState& state) const {
  Observation obs;
  obs.channels = cfg_.channels;
  obs.height = cfg_.image_size;
  obs.width = cfg_.image_size;
  obs.pixels.resize(static_cast<Eigen::Index>(cfg_.channels) * cfg_.image_size * cfg_.image_size);

  draw_background(obs, state);
  static constexpr double kGoalColor[3] = {0.10, 1.00, 0.15};
  static constexpr double kAgentColor[3] = {1.00, 0.12, 0.10};
  // blobs paint opaquely on top so their pixels never depend on the variant
  draw_blob(obs, state.goal_pos, kGoalColor);
  draw_blob(obs, state.agent_pos, kAgentColor);

  for (Eigen::Index i = 0; i < obs.pixels.size(); ++i) obs.pixels[i] = quantize8(obs.pixels[i]);
  return obs;
}

std::vector<bool> ToyEnv::agent_goal_mask(const EnvState& state) const {
  const int sz = cfg_.image_size;
  std::vector<bool> mask(static_cast<size_t>(sz) * sz, false);
  auto paint = [&](const Vec2& arena_pos) {
    const double cx = (arena_pos.x() + 1.0) * 0.5 * (sz - 1);
    const double cy = (arena_pos.y() + 1.0) * 0.5 * (sz - 1);
    const double r = blob_radius_px();
    const double r2 = r * r;
    for (int y = std::max(0, static_cast<int>(std::floor(cy - r)));
         y <= std::min(sz - 1, static_cast<int>(std::ceil(cy + r))); ++y)
      for (int x = std::max(0, static_cast<int>(std::floor(cx - r)));
           x <= std::min(sz - 1, static_cast<int>(std::ceil(cx + r))); ++x) {
        const double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy <= r2) mask[static_cast<size_t>(y) * sz + x] = true;
      }
  };
  paint(state.goal_pos);
  paint(state.agent_pos);
  return mask;
}

}  // namespace cvrl
