#pragma once

#include "cvrl/agent.hpp"

namespace cvrl {

struct PlannerConfig {
  int horizon = 15;
  int iterations = 10;
  double step_size = 0.003;
  double gamma = 0.99;
  double lambda = 0.95;
  bool backtracking = true;  // halve the step until the value does not decrease
  int max_halvings = 10;
};

struct PlanResult {
  Vec action;  // first action of the optimized sequence, inside (-1, 1)
  double value_before = 0.0;
  double value_after = 0.0;
  int iterations_used = 0;
};

// Planning objective over a pre-tanh action matrix (A x H). Implementations
// must be deterministic functions of the actions (noise fixed up front).
class PlanObjective {
 public:
  virtual ~PlanObjective() = default;
  virtual int horizon() const = 0;
  virtual int action_dim() const = 0;
  virtual Mat warm_start() const = 0;        // pre-tanh actions (A x H)
  virtual Var objective(const Var& u) = 0;   // 1x1 value to maximize
};

// Lambda-return of an imagined latent rollout under common random numbers:
// the prior noise realization is drawn once from `seed` and shared by every
// evaluation, making the objective deterministic in the actions.
class LatentRolloutObjective : public PlanObjective {
 public:
  LatentRolloutObjective(const WorldModel& wm, const Agent& agent, const RSSMState& start,
                         int horizon, double gamma, double lambda, uint64_t seed);

  int horizon() const override { return horizon_; }
  int action_dim() const override { return wm_.config().action_dim; }
  Mat warm_start() const override { return warm_start_; }
  Var objective(const Var& u) override;

 private:
  const WorldModel& wm_;
  const Agent& agent_;
  RSSMState start_;
  int horizon_;
  double gamma_, lambda_;
  Mat prior_noise_;  // (stoch x H), fixed
  Mat warm_start_;
};

// Gradient-ascent shooting on the objective, warm-started and optimized in
// pre-tanh space. iterations = 0 returns the warm start's first action
// unchanged. With backtracking on, value_after >= value_before always.
PlanResult plan(PlanObjective& objective, const PlannerConfig& cfg);

// Latent guided MPC: warm start from the deterministic actor, objective =
// lambda-return at the current state.
PlanResult plan(const WorldModel& wm, const Agent& agent, const RSSMState& state,
                const PlannerConfig& cfg, uint64_t seed);

}  // namespace cvrl
