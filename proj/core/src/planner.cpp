#include "cvrl/planner.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

LatentRolloutObjective::LatentRolloutObjective(const WorldModel& wm, const Agent& agent,
                                               const RSSMState& start, int horizon, double gamma,
                                               double lambda, uint64_t seed)
    : wm_(wm), agent_(agent), start_(start), horizon_(horizon), gamma_(gamma), lambda_(lambda) {
  if (horizon_ < 1) throw std::invalid_argument("LatentRolloutObjective: horizon must be >= 1");
  Rng rng(derive_seed(seed, "plan.noise"));
  prior_noise_ = normal_matrix(wm_.config().stoch_dim, horizon_, rng);

  // warm start: deterministic-actor rollout under the same fixed noise
  NoGradGuard ng;
  const int A = wm_.config().action_dim;
  warm_start_.resize(A, horizon_);
  Var h(Mat(start_.h)), s(Mat(start_.s));
  Mat dummy_noise = Mat::Zero(A, 1);
  for (int t = 0; t < horizon_; ++t) {
    ActorOutputVar act = agent_.act(vcat(h, s), dummy_noise, /*deterministic=*/true);
    warm_start_.col(t) = act.pre_tanh.value().col(0);
    h = wm_.deterministic_step(h, s, act.action);
    DiagGaussianVar pr = wm_.prior(h);
    s = pr.rsample(prior_noise_.col(t));
  }
}

Var LatentRolloutObjective::objective(const Var& u) {
  ImaginedBatchVar rollout;
  rollout.horizon = horizon_;
  rollout.n_starts = 1;

  RSSMStateVar state{Var(Mat(start_.h)), Var(Mat(start_.s))};
  rollout.states.push_back(state);
  for (int t = 0; t < horizon_; ++t) {
    rollout.values.push_back(agent_.value(state.feat()));
    rollout.rewards.push_back(wm_.reward_head(state.h, state.s).mean);
    Var a = tanh_(cols(u, t, 1));
    rollout.actions.push_back(a);
    Var h_next = wm_.deterministic_step(state.h, state.s, a);
    DiagGaussianVar pr = wm_.prior(h_next);
    state = RSSMStateVar{h_next, pr.rsample(prior_noise_.col(t))};
    rollout.states.push_back(state);
  }
  rollout.values.push_back(agent_.value(state.feat()));
  return lambda_returns(rollout, gamma_, lambda_)[0];
}

PlanResult plan(PlanObjective& objective, const PlannerConfig& cfg) {
  if (cfg.iterations < 0 || cfg.step_size <= 0.0)
    throw std::invalid_argument("plan: need iterations >= 0 and step_size > 0");

  Mat u = objective.warm_start();
  PlanResult result;
  result.action = u.col(0).array().tanh();
  if (cfg.iterations == 0) {
    // degrade exactly to the deterministic actor action
    NoGradGuard ng;
    const double j = objective.objective(Var(Mat(u))).item();
    result.value_before = j;
    result.value_after = j;
    result.iterations_used = 0;
    return result;
  }

  double current = 0.0;
  {
    NoGradGuard ng;
    current = objective.objective(Var(Mat(u))).item();
  }
  result.value_before = current;

  for (int it = 0; it < cfg.iterations; ++it) {
    Var uv(Mat(u), /*requires_grad=*/true);
    Var j = objective.objective(uv);
    backward(j);
    if (!uv.has_grad()) break;
    const Mat grad = uv.grad();

    if (!cfg.backtracking) {
      u += cfg.step_size * grad;
      NoGradGuard ng;
      current = objective.objective(Var(Mat(u))).item();
      result.iterations_used = it + 1;
      continue;
    }

    double eta = cfg.step_size;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_halvings; ++h) {
      Mat trial = u + eta * grad;
      double j_trial = 0.0;
      {
        NoGradGuard ng;
        j_trial = objective.objective(Var(Mat(trial))).item();
      }
      if (j_trial >= current) {
        u = std::move(trial);
        current = j_trial;
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // no admissible step along this gradient
    result.iterations_used = it + 1;
  }

  result.action = u.col(0).array().tanh();
  result.value_after = current;
  return result;
}

PlanResult plan(const WorldModel& wm, const Agent& agent, const RSSMState& state,
                const PlannerConfig& cfg, uint64_t seed) {
  LatentRolloutObjective obj(wm, agent, state, cfg.horizon, cfg.gamma, cfg.lambda, seed);
  // gradients are needed w.r.t. actions only
  FreezeGuard freeze_world(wm.params());
  FreezeGuard freeze_agent(agent.registry().params());
  return plan(obj, cfg);
}

}  // namespace cvrl
