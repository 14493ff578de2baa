#pragma once

#include "cvrl/world_model.hpp"

#include <vector>

namespace cvrl {

struct AgentConfig {
  int deter_dim = 64;
  int stoch_dim = 16;
  int action_dim = 2;
  int actor_hidden = 128;
  int actor_layers = 4;
  int value_hidden = 128;
  int value_layers = 3;
  int q_hidden = 128;
  int q_layers = 3;
  double eps_sigma = 1e-4;
  double entropy_coef = 0.1;  // SAC temperature
  double polyak_rho = 0.005;

  int feat_dim() const { return deter_dim + stoch_dim; }
};

// tanh-Gaussian policy sample with its exact change-of-variables density
struct ActorOutput {
  Vec action;
  double log_prob = 0.0;
  Vec pre_tanh;
};

struct ActorOutputVar {
  Var action;    // (A x N), strictly inside (-1, 1)
  Var log_prob;  // (1 x N)
  Var pre_tanh;  // (A x N)
};

// Actor, value network and twin Q networks with polyak-averaged targets.
class Agent {
 public:
  Agent(const AgentConfig& cfg, uint64_t seed);

  const AgentConfig& config() const { return cfg_; }
  const ParamRegistry& registry() const { return reg_; }

  std::vector<Var> actor_params() const { return by_prefix("actor."); }
  std::vector<Var> value_params() const { return by_prefix("value."); }
  std::vector<Var> q_params() const;          // both mains
  std::vector<Var> q_target_params() const;   // both targets

  // feat = [h; s]; noise is (A x N) standard normal, ignored in
  // deterministic mode
  ActorOutputVar act(const Var& feat, const Mat& noise, bool deterministic) const;
  ActorOutput act(const RSSMState& state, Rng& rng, bool deterministic) const;

  Var value(const Var& feat) const { return value_(feat); }
  Var q1(const Var& feat, const Var& action, bool target = false) const;
  Var q2(const Var& feat, const Var& action, bool target = false) const;

  // target <- rho * main + (1 - rho) * target
  void polyak_update(double rho);
  void sync_targets();  // hard copy, used at initialization

 private:
  std::vector<Var> by_prefix(const std::string& prefix) const;

  AgentConfig cfg_;
  ParamRegistry reg_;
  MLP actor_, value_, q1_, q2_, q1_target_, q2_target_;
};

// ---------------------------------------------------------------------------
// latent imagination

// Model-generated trajectory from one start state. `values` come from the
// value network; `lambda_values` are filled by fill_lambda_values.
struct ImaginedRollout {
  std::vector<RSSMState> states;      // H+1, index 0 = start
  std::vector<Vec> actions;           // H
  std::vector<double> reward_means;   // H
  std::vector<double> values;         // H+1
  std::vector<double> lambda_values;  // H once filled

  int horizon() const { return static_cast<int>(actions.size()); }
};

// Batched differentiable rollout, one start per column.
struct ImaginedBatchVar {
  std::vector<RSSMStateVar> states;  // H+1
  std::vector<Var> actions;          // H, (A x N)
  std::vector<Var> rewards;          // H, (1 x N)
  std::vector<Var> values;           // H+1, (1 x N)
  int horizon = 0;
  int n_starts = 0;
};

// Rolls the model forward with actor-sampled actions and reparameterized
// prior samples; differentiable w.r.t. world and actor parameters.
ImaginedBatchVar imagine_batch(const WorldModel& wm, const Agent& agent,
                               const std::vector<RSSMState>& starts, int H, uint64_t seed);

// Per-start numeric view of the same computation.
std::vector<ImaginedRollout> imagine(const WorldModel& wm, const Agent& agent,
                                     const std::vector<RSSMState>& starts, int H, uint64_t seed);

// k-step bootstrapped value estimate: sum_{n=tau}^{h-1} gamma^{n-tau} r_n +
// gamma^{h-tau} v_h with h = min(tau+k, H).
double v_n_k(const ImaginedRollout& rollout, int tau, int k, double gamma);

// Exponentially-weighted mixture of the k-step estimates, evaluated by the
// equivalent backward recursion over the remaining horizon.
double v_lambda(const ImaginedRollout& rollout, int tau, double lambda, double gamma);

void fill_lambda_values(ImaginedRollout& rollout, double gamma, double lambda);

// Graph lambda-returns for tau = 0..H-1, via
// G_tau = r_tau + gamma ((1-lambda) v_{tau+1} + lambda G_{tau+1}), G_H = v_H.
std::vector<Var> lambda_returns(const ImaginedBatchVar& rollout, double gamma, double lambda);

// ---------------------------------------------------------------------------
// losses

struct LossPair {
  Var actor;
  Var critic;
};

// Actor maximizes lambda-returns through the dynamics; critic regresses the
// value network onto detached lambda-return targets.
LossPair dreamer_loss(const Agent& agent, const ImaginedBatchVar& rollout, double gamma,
                      double lambda);

// Single-step transitions in latent space for the off-policy SAC updates.
struct TransitionBatch {
  Mat feat;        // (feat_dim x N)
  Mat next_feat;   // (feat_dim x N), ignored where terminal
  Mat actions;     // (A x N)
  Mat rewards;     // (1 x N)
  std::vector<uint8_t> terminal;

  Eigen::Index size() const { return feat.cols(); }
};

// Twin-Q SAC on real transitions. Bootstrap targets are constants and
// terminal steps bootstrap with zero; the actor term treats the Q nets as a
// frozen critic, so its gradient reaches the actor only.
LossPair sac_loss(const Agent& agent, const TransitionBatch& batch, double gamma, uint64_t seed);

struct HybridLoss {
  Var actor;           // dreamer.actor + alpha * sac.actor
  Var dreamer_critic;
  Var sac_q;
};

// alpha = 0 returns the Dreamer actor objective unchanged (exact subset).
HybridLoss hybrid_loss(const LossPair& dreamer, const LossPair& sac, double alpha);

}  // namespace cvrl
