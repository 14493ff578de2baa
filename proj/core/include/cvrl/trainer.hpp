#pragma once

#include "cvrl/agent.hpp"
#include "cvrl/config.hpp"
#include "cvrl/metrics.hpp"
#include "cvrl/objectives.hpp"
#include "cvrl/planner.hpp"
#include "cvrl/replay.hpp"

#include <functional>
#include <string>

namespace cvrl {

// Per-step result of the four-optimizer update. A non-finite loss aborts the
// step without touching parameters and reports the diagnostic.
struct TrainStepMetrics {
  bool ok = true;
  std::string error;
  LossBreakdown model;
  double dreamer_actor = 0.0;
  double sac_actor = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double q_loss = 0.0;
};

// Owns the environment, models, replay buffer and the four optimizers
// (model / value / actor / SAC). All parameter mutation happens on the
// caller's thread; ablation variants are strict feature toggles.
class Trainer {
 public:
  explicit Trainer(const Config& cfg);

  const Config& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  bool uses_planner() const { return variant_ != Variant::no_mpc; }
  bool uses_sac() const { return variant_ != Variant::no_sac; }
  ModelObjective model_objective() const;

  WorldModel& world() { return wm_; }
  Agent& agent() { return agent_; }
  ReplayBuffer& buffer() { return buffer_; }
  ToyEnv& env() { return env_; }
  Adam& model_optimizer() { return opt_model_; }

  int64_t step() const { return step_; }
  int64_t env_steps() const { return env_steps_; }
  int64_t episodes_collected() const { return episodes_collected_; }

  TrainStepMetrics train_step(const SequenceBatch& batch);

  // Runs a full episode maintaining the posterior state online. The caller
  // appends the result to the replay buffer.
  Episode collect_episode(bool use_planner, double exploration_noise, uint64_t seed,
                          double* plan_value_delta = nullptr);
  Episode collect_random_episode(uint64_t seed);  // uniform random actions

  // Deterministic-actor evaluation (+ planner when the variant uses it);
  // never writes to the replay buffer.
  EvalStats evaluate(int episodes, uint64_t seed);

  // Full loop: warmup, collection schedule, training, periodic eval and
  // checkpoints. Metrics go to <out_dir>/metrics.jsonl.
  void run(const std::string& out_dir, bool resume = false,
           const std::function<void(const MetricsRecord&)>& observer = nullptr);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  // detached latent transitions for the SAC update
  TransitionBatch make_transitions(const FilterResult& filter, const SequenceBatch& batch) const;

 private:
  void zero_all_grads();
  std::vector<RSSMState> imagination_starts(const FilterResult& filter) const;
  uint64_t sub_seed(std::string_view tag, uint64_t counter) const;

  Config cfg_;
  Variant variant_;
  ToyEnv env_;
  WorldModel wm_;
  Agent agent_;
  ReplayBuffer buffer_;
  Adam opt_model_, opt_value_, opt_actor_, opt_sac_;

  int64_t step_ = 0;
  int64_t env_steps_ = 0;
  int64_t episodes_collected_ = 0;
};

}  // namespace cvrl
