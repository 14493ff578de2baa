#include "cvrl/agent.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

namespace {
constexpr double kLog2 = 0.69314718055994530941723212145818;
}

Agent::Agent(const AgentConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(derive_seed(seed, "agent.init"));
  const int feat = cfg_.feat_dim();
  actor_ = MLP(feat, cfg_.actor_hidden, 2 * cfg_.action_dim, cfg_.actor_layers, rng, reg_,
               "actor");
  value_ = MLP(feat, cfg_.value_hidden, 1, cfg_.value_layers, rng, reg_, "value");
  q1_ = MLP(feat + cfg_.action_dim, cfg_.q_hidden, 1, cfg_.q_layers, rng, reg_, "q1");
  q2_ = MLP(feat + cfg_.action_dim, cfg_.q_hidden, 1, cfg_.q_layers, rng, reg_, "q2");
  q1_target_ = MLP(feat + cfg_.action_dim, cfg_.q_hidden, 1, cfg_.q_layers, rng, reg_, "q1_target");
  q2_target_ = MLP(feat + cfg_.action_dim, cfg_.q_hidden, 1, cfg_.q_layers, rng, reg_, "q2_target");
  sync_targets();
}

std::vector<Var> Agent::by_prefix(const std::string& prefix) const {
  std::vector<Var> out;
  for (size_t i = 0; i < reg_.names().size(); ++i)
    if (reg_.names()[i].rfind(prefix, 0) == 0) out.push_back(reg_.params()[i]);
  return out;
}

std::vector<Var> Agent::q_params() const {
  auto out = by_prefix("q1.");
  auto q2p = by_prefix("q2.");
  out.insert(out.end(), q2p.begin(), q2p.end());
  return out;
}

std::vector<Var> Agent::q_target_params() const {
  auto out = by_prefix("q1_target.");
  auto q2p = by_prefix("q2_target.");
  out.insert(out.end(), q2p.begin(), q2p.end());
  return out;
}

ActorOutputVar Agent::act(const Var& feat, const Mat& noise, bool deterministic) const {
  Var out = actor_(feat);
  Var mean = rows(out, 0, cfg_.action_dim);
  Var stddev = softplus_(rows(out, cfg_.action_dim, cfg_.action_dim)) + cfg_.eps_sigma;

  Var u = deterministic ? mean : mean + stddev * Var(noise);
  Var action = tanh_(u);

  // Gaussian density of u plus the tanh change-of-variables correction,
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  DiagGaussianVar base{mean, stddev};
  Var correction = sum_rows(2.0 * (Var(Mat::Constant(u.rows(), u.cols(), kLog2)) - u -
                                   softplus_(-2.0 * u)));
  Var log_prob = base.log_prob(u) - correction;
  return {action, log_prob, u};
}

ActorOutput Agent::act(const RSSMState& state, Rng& rng, bool deterministic) const {
  NoGradGuard ng;
  Vec feat(cfg_.feat_dim());
  feat << state.h, state.s;
  Mat noise(cfg_.action_dim, 1);
  for (int i = 0; i < cfg_.action_dim; ++i) noise(i, 0) = rng.normal();
  ActorOutputVar out = act(Var(Mat(feat)), noise, deterministic);
  return {out.action.value().col(0), out.log_prob.item(), out.pre_tanh.value().col(0)};
}

Var Agent::q1(const Var& feat, const Var& action, bool target) const {
  return (target ? q1_target_ : q1_)(vcat(feat, action));
}

Var Agent::q2(const Var& feat, const Var& action, bool target) const {
  return (target ? q2_target_ : q2_)(vcat(feat, action));
}

void Agent::polyak_update(double rho) {
  auto mains = q_params();
  auto targets = q_target_params();
  for (size_t i = 0; i < mains.size(); ++i)
    targets[i].value_mut() = rho * mains[i].value() + (1.0 - rho) * targets[i].value();
}

void Agent::sync_targets() {
  auto mains = q_params();
  auto targets = q_target_params();
  for (size_t i = 0; i < mains.size(); ++i) targets[i].value_mut() = mains[i].value();
}

// ---------------------------------------------------------------------------

ImaginedBatchVar imagine_batch(const WorldModel& wm, const Agent& agent,
                               const std::vector<RSSMState>& starts, int H, uint64_t seed) {
  if (H < 1) throw std::invalid_argument("imagine: H must be >= 1");
  if (starts.empty()) throw std::invalid_argument("imagine: no start states");
  const int N = static_cast<int>(starts.size());
  const auto& wcfg = wm.config();
  const auto& acfg = agent.config();

  Mat h0(wcfg.deter_dim, N), s0(wcfg.stoch_dim, N);
  for (int i = 0; i < N; ++i) {
    h0.col(i) = starts[i].h;
    s0.col(i) = starts[i].s;
  }

  Rng rng(derive_seed(seed, "imagine.noise"));
  // per step: actor noise block then prior noise block
  std::vector<Mat> actor_noise(H), prior_noise(H);
  for (int t = 0; t < H; ++t) {
    actor_noise[t] = normal_matrix(acfg.action_dim, N, rng);
    prior_noise[t] = normal_matrix(wcfg.stoch_dim, N, rng);
  }

  ImaginedBatchVar out;
  out.horizon = H;
  out.n_starts = N;
  out.states.reserve(H + 1);
  out.actions.reserve(H);
  out.rewards.reserve(H);
  out.values.reserve(H + 1);

  RSSMStateVar state{Var(std::move(h0)), Var(std::move(s0))};
  out.states.push_back(state);
  for (int t = 0; t < H; ++t) {
    Var feat = state.feat();
    out.values.push_back(agent.value(feat));
    out.rewards.push_back(wm.reward_head(state.h, state.s).mean);
    ActorOutputVar act = agent.act(feat, actor_noise[t], /*deterministic=*/false);
    out.actions.push_back(act.action);
    Var h_next = wm.deterministic_step(state.h, state.s, act.action);
    DiagGaussianVar pr = wm.prior(h_next);
    Var s_next = pr.rsample(prior_noise[t]);
    state = RSSMStateVar{h_next, s_next};
    out.states.push_back(state);
  }
  out.values.push_back(agent.value(state.feat()));
  return out;
}

std::vector<ImaginedRollout> imagine(const WorldModel& wm, const Agent& agent,
                                     const std::vector<RSSMState>& starts, int H,
                                     uint64_t seed) {
  NoGradGuard ng;
  ImaginedBatchVar batch = imagine_batch(wm, agent, starts, H, seed);
  const int N = batch.n_starts;
  std::vector<ImaginedRollout> out(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    auto& r = out[static_cast<size_t>(i)];
    r.states.reserve(H + 1);
    r.values.reserve(H + 1);
    for (int t = 0; t <= H; ++t) {
      r.states.push_back({batch.states[t].h.value().col(i), batch.states[t].s.value().col(i)});
      r.values.push_back(batch.values[t].value()(0, i));
    }
    r.actions.reserve(H);
    r.reward_means.reserve(H);
    for (int t = 0; t < H; ++t) {
      r.actions.push_back(batch.actions[t].value().col(i));
      r.reward_means.push_back(batch.rewards[t].value()(0, i));
    }
  }
  return out;
}

double v_n_k(const ImaginedRollout& rollout, int tau, int k, double gamma) {
  const int H = rollout.horizon();
  if (k < 1) throw std::invalid_argument("v_n_k: k must be >= 1");
  if (tau < 0 || tau >= H) throw std::invalid_argument("v_n_k: tau out of range");
  const int h = std::min(tau + k, H);
  double acc = 0.0;
  double discount = 1.0;
  for (int n = tau; n < h; ++n) {
    acc += discount * rollout.reward_means[static_cast<size_t>(n)];
    discount *= gamma;
  }
  return acc + discount * rollout.values[static_cast<size_t>(h)];
}

double v_lambda(const ImaginedRollout& rollout, int tau, double lambda, double gamma) {
  const int H = rollout.horizon();
  if (tau < 0 || tau >= H) throw std::invalid_argument("v_lambda: tau out of range");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("v_lambda: lambda in [0,1]");
  double g = rollout.values[static_cast<size_t>(H)];
  for (int n = H - 1; n >= tau; --n) {
    const double bootstrap =
        (1.0 - lambda) * rollout.values[static_cast<size_t>(n + 1)] + lambda * g;
    g = rollout.reward_means[static_cast<size_t>(n)] + gamma * bootstrap;
  }
  return g;
}

void fill_lambda_values(ImaginedRollout& rollout, double gamma, double lambda) {
  const int H = rollout.horizon();
  rollout.lambda_values.resize(static_cast<size_t>(H));
  for (int tau = 0; tau < H; ++tau)
    rollout.lambda_values[static_cast<size_t>(tau)] = v_lambda(rollout, tau, lambda, gamma);
}

std::vector<Var> lambda_returns(const ImaginedBatchVar& rollout, double gamma, double lambda) {
  const int H = rollout.horizon;
  std::vector<Var> g(static_cast<size_t>(H));
  Var next = rollout.values[static_cast<size_t>(H)];
  for (int tau = H - 1; tau >= 0; --tau) {
    Var bootstrap = (1.0 - lambda) * rollout.values[static_cast<size_t>(tau + 1)] + lambda * next;
    next = rollout.rewards[static_cast<size_t>(tau)] + gamma * bootstrap;
    g[static_cast<size_t>(tau)] = next;
  }
  return g;
}

LossPair dreamer_loss(const Agent& agent, const ImaginedBatchVar& rollout, double gamma,
                      double lambda) {
  std::vector<Var> g = lambda_returns(rollout, gamma, lambda);
  Var actor_loss = -mean_all(hcat(g));

  // value regression onto constant targets, states detached
  std::vector<Var> residuals;
  residuals.reserve(g.size());
  for (size_t tau = 0; tau < g.size(); ++tau) {
    Var pred = agent.value(detach(rollout.states[tau].feat()));
    residuals.push_back(square_(pred - detach(g[tau])));
  }
  Var critic_loss = 0.5 * mean_all(hcat(residuals));
  return {actor_loss, critic_loss};
}

LossPair sac_loss(const Agent& agent, const TransitionBatch& batch, double gamma, uint64_t seed) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw std::invalid_argument("sac_loss: empty transition batch");
  const auto& cfg = agent.config();
  Rng rng(derive_seed(seed, "sac.noise"));
  Mat next_noise = normal_matrix(cfg.action_dim, n, rng);
  Mat cur_noise = normal_matrix(cfg.action_dim, n, rng);

  // bootstrap target y = r + gamma (1-terminal)(min Q_target(s',a') - alpha_ent log pi(a'|s'))
  Mat y(1, n);
  {
    NoGradGuard ng;
    Var next_feat((Mat(batch.next_feat)));
    ActorOutputVar next_act = agent.act(next_feat, next_noise, false);
    Var tq = min_(agent.q1(next_feat, next_act.action, true),
                  agent.q2(next_feat, next_act.action, true));
    Mat soft = tq.value() - cfg.entropy_coef * next_act.log_prob.value();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double cont = batch.terminal[static_cast<size_t>(i)] ? 0.0 : 1.0;
      y(0, i) = batch.rewards(0, i) + gamma * cont * soft(0, i);
    }
  }

  Var feat((Mat(batch.feat)));
  Var act((Mat(batch.actions)));
  Var target((Mat(y)));
  Var q_loss = 0.5 * mean_all(square_(agent.q1(feat, act, false) - target)) +
               0.5 * mean_all(square_(agent.q2(feat, act, false) - target));

  // actor term: Q nets act as a frozen critic here
  Var actor_loss;
  {
    auto q_frozen = agent.q_params();
    FreezeGuard freeze(q_frozen);
    ActorOutputVar pi = agent.act(feat, cur_noise, false);
    Var q_min = min_(agent.q1(feat, pi.action, false), agent.q2(feat, pi.action, false));
    actor_loss = mean_all(cfg.entropy_coef * pi.log_prob - q_min);
  }
  return {actor_loss, q_loss};
}

HybridLoss hybrid_loss(const LossPair& dreamer, const LossPair& sac, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("hybrid_loss: alpha must be >= 0");
  HybridLoss out;
  out.actor = alpha == 0.0 ? dreamer.actor : dreamer.actor + alpha * sac.actor;
  out.dreamer_critic = dreamer.critic;
  out.sac_q = sac.critic;
  return out;
}

}  // namespace cvrl
