#pragma once

#include "cvrl/agent.hpp"
#include "cvrl/env.hpp"
#include "cvrl/errors.hpp"
#include "cvrl/planner.hpp"
#include "cvrl/world_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cvrl {

enum class Variant { cvrl, generative, no_mpc, no_sac, reward_only };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// Flat key = value run configuration. Every field has a default, so an empty
// config is runnable; unknown keys are rejected.
struct Config {
  // environment
  int image_size = 32;
  int horizon = 100;
  bool natural = false;
  double goal_radius = 0.1;
  int num_distractors = 12;
  std::string distractor_seed_policy = "episode";  // or "fixed"
  int64_t distractor_seed = 0;

  // world model
  int deter_dim = 64;
  int stoch_dim = 16;
  int embed_dim = 128;
  int proj_dim = 64;
  int model_hidden = 128;
  int conv_depth = 8;
  double eps_sigma = 1e-4;

  // agent
  int actor_hidden = 128;
  int value_hidden = 128;
  int q_hidden = 128;
  double entropy_coef = 0.1;
  double polyak_rho = 0.005;
  double alpha = 1.0;  // hybrid weight on the SAC actor term

  // replay
  int64_t replay_capacity = 60000;
  int batch_size = 8;
  int seq_len = 10;

  // optimization
  double gamma = 0.99;
  double lambda = 0.95;
  int imagine_horizon = 15;
  int imagine_starts = 0;  // 0 = imagine from every posterior state in the batch
  double free_nats = 1.0;
  double lr_model = 6e-4;
  double lr_value = 8e-5;
  double lr_actor = 8e-5;
  double lr_sac = 8e-5;
  double adam_eps = 1e-5;
  double grad_clip = 100.0;

  // schedule
  int64_t train_steps = 25000;
  int collect_interval = 50;
  int warmup_episodes = 5;
  double exploration_noise = 0.3;
  int eval_interval = 2500;
  int eval_episodes = 10;
  int checkpoint_interval = 5000;
  bool checkpoint_replay = true;

  // planner
  int plan_horizon = 15;
  int plan_iterations = 10;
  double plan_step_size = 0.003;
  bool plan_backtracking = true;
  int plan_max_halvings = 10;

  // run
  std::string variant = "cvrl";
  int64_t seed = 0;

  static const std::vector<std::string>& keys();
  void set(const std::string& key, const std::string& value);  // throws ConfigError
  std::string get(const std::string& key) const;

  // `key = value` lines, '#' comments; unknown keys raise ConfigError
  void load_file(const std::string& path);
  static Config from_file(const std::string& path);

  std::string to_text() const;  // canonical sorted form
  uint64_t hash() const;
  void validate() const;  // throws ConfigError

  Variant variant_enum() const { return variant_from_string(variant); }
  WorldModelConfig world_model_config() const;
  AgentConfig agent_config() const;
  EnvConfig env_config() const;
  PlannerConfig planner_config() const;
};

}  // namespace cvrl
