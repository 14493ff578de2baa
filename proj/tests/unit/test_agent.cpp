#include "cvrl/agent.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace cvrl;
using test::grad_check;
using test::random_mat;

namespace {

AgentConfig tiny_agent_cfg() {
  AgentConfig cfg;
  cfg.deter_dim = 5;
  cfg.stoch_dim = 3;
  cfg.action_dim = 2;
  cfg.actor_hidden = 8;
  cfg.value_hidden = 8;
  cfg.q_hidden = 8;
  return cfg;
}

WorldModelConfig tiny_world_cfg() {
  WorldModelConfig cfg;
  cfg.image_size = 8;
  cfg.deter_dim = 5;
  cfg.stoch_dim = 3;
  cfg.embed_dim = 4;
  cfg.proj_dim = 3;
  cfg.hidden = 8;
  cfg.conv_depth = 2;
  return cfg;
}

void set_param(const Agent& agent, const std::string& name, const Mat& v) {
  Var p = agent.registry().find(name);
  p.value_mut() = v;
}

// force the actor head to constant mean `mu` with stddev at the floor
void pin_actor(const Agent& agent, double mu) {
  const auto& cfg = agent.config();
  const std::string last = "actor.l" + std::to_string(cfg.actor_layers - 1);
  Mat w = agent.registry().find(last + ".weight").value();
  set_param(agent, last + ".weight", Mat::Zero(w.rows(), w.cols()));
  Mat b = Mat::Zero(2 * cfg.action_dim, 1);
  b.topRows(cfg.action_dim).setConstant(mu);
  b.bottomRows(cfg.action_dim).setConstant(-60.0);  // softplus(-60) ~ 0
  set_param(agent, last + ".bias", b);
}

ImaginedRollout hand_rollout(const std::vector<double>& rewards,
                             const std::vector<double>& values) {
  ImaginedRollout r;
  r.reward_means = rewards;
  r.values = values;
  const int H = static_cast<int>(rewards.size());
  r.actions.assign(static_cast<size_t>(H), Vec::Zero(2));
  r.states.assign(static_cast<size_t>(H) + 1, RSSMState{Vec::Zero(5), Vec::Zero(3)});
  return r;
}

}  // namespace

TEST_CASE("actor: zero mean with vanishing stddev acts at the origin") {
  Agent agent(tiny_agent_cfg(), 1);
  pin_actor(agent, 0.0);
  Rng rng(2);
  RSSMState st{Vec::Ones(5), Vec::Ones(3)};
  ActorOutput det = agent.act(st, rng, true);
  CHECK(det.action.cwiseAbs().maxCoeff() == 0.0);
  ActorOutput sam = agent.act(st, rng, false);
  CHECK(sam.action.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("actor: samples stay strictly inside (-1, 1)") {
  Agent agent(tiny_agent_cfg(), 3);
  Rng rng(4);
  const int n = 100000;
  Vec featv = random_mat(8, 1, rng).col(0);
  Mat noise = random_mat(2, n, rng);
  Mat feats(8, n);
  feats.colwise() = featv;
  ActorOutputVar out = agent.act(Var(feats), noise, false);
  CHECK(out.action.value().cwiseAbs().maxCoeff() < 1.0);
  CHECK(out.log_prob.value().allFinite());
}

TEST_CASE("actor: log_prob matches the tanh-gaussian density numerically") {
  AgentConfig cfg = tiny_agent_cfg();
  cfg.action_dim = 1;
  Agent agent(cfg, 5);
  Rng rng(6);
  Vec featv = random_mat(8, 1, rng).col(0);
  RSSMState st{featv.topRows(5), featv.bottomRows(3)};

  // recover (mu, sigma) of the pre-tanh gaussian through the public surface
  Rng tmp(0);
  const double mu = agent.act(st, tmp, true).pre_tanh[0];
  Mat one = Mat::Ones(1, 1);
  Var feat((Mat(featv)));
  const double sigma = agent.act(feat, one, false).pre_tanh.value()(0, 0) - mu;
  REQUIRE(sigma > 0.0);

  auto density = [&](double a) {
    const double u = std::atanh(a);
    const double g =
        std::exp(-0.5 * (u - mu) * (u - mu) / (sigma * sigma)) / (sigma * std::sqrt(2.0 * M_PI));
    return g / (1.0 - a * a);
  };

  // exp(log_prob) agrees with the analytic density at sampled actions
  for (int i = 0; i < 100; ++i) {
    ActorOutput o = agent.act(st, rng, false);
    CHECK(std::exp(o.log_prob) == doctest::Approx(density(o.action[0])).epsilon(1e-8));
  }

  // histogram of samples vs the density curve
  const int n = 100000, bins = 20;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    const double a = agent.act(st, rng, false).action[0];
    const int b = std::min(bins - 1, static_cast<int>((a + 1.0) / 2.0 * bins));
    ++counts[b];
  }
  const double width = 2.0 / bins;
  for (int b = 0; b < bins; ++b) {
    const double center = -1.0 + (b + 0.5) * width;
    const double expected = density(center) * width;
    const double got = static_cast<double>(counts[b]) / n;
    const double se = std::sqrt(std::max(expected, 1e-6) * (1.0 - expected) / n);
    CHECK(std::abs(got - expected) < 5.0 * se + 0.02 * expected + 1e-4);
  }

  // the density integrates to one over (-1, 1)
  const int grid = 20000;
  double integral = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double a = -1.0 + 2.0 * (i + 0.5) / grid;
    integral += density(a) * 2.0 / grid;
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("v_n_k: bootstrap formula, hand value, and horizon clamp") {
  ImaginedRollout r = hand_rollout({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0, 0.0});
  CHECK(v_n_k(r, 0, 3, 0.5) == doctest::Approx(1.75));
  CHECK(v_n_k(r, 0, 7, 0.5) == doctest::Approx(1.75));  // h clamps to H

  ImaginedRollout r2 = hand_rollout({0.3, -0.2, 0.7}, {2.0, -1.0, 0.5, 3.0});
  CHECK(v_n_k(r2, 1, 1, 0.9) == doctest::Approx(-0.2 + 0.9 * 0.5));

  // zero rewards with a constant value head: gamma^{h - tau} * c
  ImaginedRollout r3 = hand_rollout({0, 0, 0, 0}, {7.0, 7.0, 7.0, 7.0, 7.0});
  CHECK(v_n_k(r3, 1, 2, 0.8) == doctest::Approx(0.8 * 0.8 * 7.0));
  CHECK(v_n_k(r3, 1, 99, 0.8) == doctest::Approx(std::pow(0.8, 3) * 7.0));
}

TEST_CASE("v_lambda: endpoints and brute-force weighted sum") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> rewards(5), values(6);
    for (auto& x : rewards) x = rng.normal();
    for (auto& x : values) x = rng.normal();
    ImaginedRollout r = hand_rollout(rewards, values);
    const double gamma = rng.uniform(0.5, 0.999);
    const int H = 5;
    for (int tau = 0; tau < H; ++tau) {
      CHECK(test::rel_err(v_lambda(r, tau, 0.0, gamma), v_n_k(r, tau, 1, gamma)) < 1e-12);
      CHECK(test::rel_err(v_lambda(r, tau, 1.0, gamma), v_n_k(r, tau, H, gamma)) < 1e-12);
      const double lambda = rng.uniform(0.0, 1.0);
      double brute = std::pow(lambda, H - 1) * v_n_k(r, tau, H, gamma);
      for (int n = 1; n < H; ++n)
        brute += (1.0 - lambda) * std::pow(lambda, n - 1) * v_n_k(r, tau, n, gamma);
      CHECK(std::abs(v_lambda(r, tau, lambda, gamma) - brute) <= 1e-6);
    }
  }
}

TEST_CASE("lambda weights sum to one across a lambda grid") {
  for (int H : {1, 2, 5, 15}) {
    for (int i = 0; i <= 100; ++i) {
      const double lambda = i / 100.0;
      double sum = std::pow(lambda, H - 1);
      for (int n = 1; n < H; ++n) sum += (1.0 - lambda) * std::pow(lambda, n - 1);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("imagine: base case shapes and bitwise seed determinism") {
  WorldModelConfig wcfg = tiny_world_cfg();
  WorldModel wm(wcfg, 8);
  Agent agent(tiny_agent_cfg(), 9);
  Rng rng(10);
  std::vector<RSSMState> starts{{random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)},
                                {random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)}};

  auto rolls = imagine(wm, agent, starts, 1, 11);
  REQUIRE(rolls.size() == 2);
  CHECK(rolls[0].states.size() == 2);
  CHECK(rolls[0].actions.size() == 1);
  CHECK(rolls[0].reward_means.size() == 1);
  CHECK(rolls[0].values.size() == 2);
  for (const auto& a : rolls[0].actions) CHECK(a.cwiseAbs().maxCoeff() < 1.0);

  auto a1 = imagine(wm, agent, starts, 4, 12);
  auto a2 = imagine(wm, agent, starts, 4, 12);
  for (size_t i = 0; i < a1.size(); ++i)
    for (int t = 0; t < 4; ++t) {
      CHECK((a1[i].states[t + 1].s - a2[i].states[t + 1].s).cwiseAbs().maxCoeff() == 0.0);
      CHECK(a1[i].reward_means[t] == a2[i].reward_means[t]);
    }
  auto a3 = imagine(wm, agent, starts, 4, 13);
  CHECK((a1[0].states[4].s - a3[0].states[4].s).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("imagine: floored stddevs collapse the rollout to the mean iteration") {
  WorldModelConfig wcfg = tiny_world_cfg();
  wcfg.eps_sigma = 1e-12;
  WorldModel wm(wcfg, 14);
  AgentConfig acfg = tiny_agent_cfg();
  acfg.eps_sigma = 1e-12;
  Agent agent(acfg, 15);
  pin_actor(agent, 0.4);
  {
    // pin the prior stddev to the floor as well
    Var w = wm.registry().find("rssm.prior.l1.weight");
    Mat wv = w.value();
    wv.bottomRows(wcfg.stoch_dim).setZero();
    w.value_mut() = wv;
    Var b = wm.registry().find("rssm.prior.l1.bias");
    Mat bv = b.value();
    bv.bottomRows(wcfg.stoch_dim).setConstant(-60.0);
    b.value_mut() = bv;
  }
  Rng rng(16);
  std::vector<RSSMState> starts{{random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)}};
  auto rolls = imagine(wm, agent, starts, 5, 17);

  // deterministic mean iteration with the pinned action
  NoGradGuard ng;
  Var h((Mat(starts[0].h))), s((Mat(starts[0].s)));
  for (int t = 0; t < 5; ++t) {
    Var a(Mat::Constant(2, 1, std::tanh(0.4)));
    h = wm.deterministic_step(h, s, a);
    s = wm.prior(h).mean;
    CHECK((rolls[0].states[t + 1].s - s.value().col(0)).cwiseAbs().maxCoeff() <= 3e-12);
  }
}

TEST_CASE("dreamer loss: zero rewards and zero values zero both objectives") {
  WorldModelConfig wcfg = tiny_world_cfg();
  WorldModel wm(wcfg, 18);
  Agent agent(tiny_agent_cfg(), 19);
  {
    // zero the reward head output layer and the value output layer
    Var w = wm.registry().find("reward.l2.weight");
    w.value_mut().setZero();
    Var b = wm.registry().find("reward.l2.bias");
    b.value_mut().setZero();
    Var vw = agent.registry().find("value.l2.weight");
    vw.value_mut().setZero();
    Var vb = agent.registry().find("value.l2.bias");
    vb.value_mut().setZero();
  }
  Rng rng(20);
  std::vector<RSSMState> starts{{random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)}};
  ImaginedBatchVar roll = imagine_batch(wm, agent, starts, 4, 21);
  LossPair pair = dreamer_loss(agent, roll, 0.99, 0.95);
  CHECK(pair.actor.item() == 0.0);
  CHECK(pair.critic.item() == 0.0);
}

TEST_CASE("dreamer actor loss equals the negated mean of numeric lambda returns") {
  WorldModelConfig wcfg = tiny_world_cfg();
  WorldModel wm(wcfg, 22);
  Agent agent(tiny_agent_cfg(), 23);
  Rng rng(24);
  std::vector<RSSMState> starts{{random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)},
                                {random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)}};
  const int H = 5;
  ImaginedBatchVar roll = imagine_batch(wm, agent, starts, H, 25);
  LossPair pair = dreamer_loss(agent, roll, 0.9, 0.8);

  auto rolls = imagine(wm, agent, starts, H, 25);
  double acc = 0.0;
  for (auto& r : rolls) {
    fill_lambda_values(r, 0.9, 0.8);
    for (double v : r.lambda_values) acc += v;
  }
  CHECK(pair.actor.item() == doctest::Approx(-acc / (2.0 * H)).epsilon(1e-10));
}

TEST_CASE("gradcheck: dreamer actor gradient through dynamics") {
  WorldModelConfig wcfg = tiny_world_cfg();
  WorldModel wm(wcfg, 26);
  AgentConfig acfg = tiny_agent_cfg();
  acfg.actor_hidden = 4;
  acfg.actor_layers = 2;
  Agent agent(acfg, 27);
  Rng rng(28);
  std::vector<RSSMState> starts{{random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)}};
  std::vector<Var> actor_params = agent.actor_params();
  auto f = [&] {
    FreezeGuard freeze(wm.params());
    ImaginedBatchVar roll = imagine_batch(wm, agent, starts, 3, 29);
    return dreamer_loss(agent, roll, 0.9, 0.8).actor;
  };
  CHECK(grad_check(f, actor_params, 1e-6) < 1e-4);
}

TEST_CASE("dreamer critic: gradient matches finite differences with frozen targets") {
  WorldModelConfig wcfg = tiny_world_cfg();
  WorldModel wm(wcfg, 30);
  AgentConfig acfg = tiny_agent_cfg();
  acfg.value_hidden = 4;
  Agent agent(acfg, 31);
  Rng rng(32);
  std::vector<RSSMState> starts{{random_mat(5, 1, rng).col(0), random_mat(3, 1, rng).col(0)}};
  ImaginedBatchVar roll = imagine_batch(wm, agent, starts, 3, 33);

  // freeze the regression targets and the input states numerically
  std::vector<Var> g = lambda_returns(roll, 0.9, 0.8);
  std::vector<Mat> targets, feats;
  for (size_t tau = 0; tau < g.size(); ++tau) {
    targets.push_back(g[tau].value());
    feats.push_back(roll.states[tau].feat().value());
  }
  std::vector<Var> value_params = agent.value_params();
  auto frozen = [&] {
    std::vector<Var> residuals;
    for (size_t tau = 0; tau < targets.size(); ++tau)
      residuals.push_back(square_(agent.value(Var(feats[tau])) - Var(targets[tau])));
    return 0.5 * mean_all(hcat(residuals));
  };

  // analytic gradient from the full dreamer_loss graph
  zero_grads(value_params);
  LossPair pair = dreamer_loss(agent, roll, 0.9, 0.8);
  CHECK(pair.critic.item() == doctest::Approx(frozen().item()).epsilon(1e-12));
  backward(pair.critic);
  std::vector<Mat> analytic;
  for (const auto& p : value_params)
    analytic.push_back(p.has_grad() ? p.grad() : Mat::Zero(p.rows(), p.cols()));
  zero_grads(value_params);

  const double h = 1e-6;
  double worst = 0.0;
  for (size_t k = 0; k < value_params.size(); ++k) {
    Var p = value_params[k];
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double saved = p.value()(i, j);
        NoGradGuard ng;
        p.value_mut()(i, j) = saved + h;
        const double plus = frozen().item();
        p.value_mut()(i, j) = saved - h;
        const double minus = frozen().item();
        p.value_mut()(i, j) = saved;
        worst = std::max(worst, test::rel_err(analytic[k](i, j), (plus - minus) / (2 * h)));
      }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("sac: bootstrap and zero-residual identities") {
  AgentConfig acfg = tiny_agent_cfg();
  Agent agent(acfg, 34);
  // zero both Q nets (targets copy them exactly)
  for (auto p : agent.q_params()) p.value_mut().setZero();
  agent.sync_targets();

  Rng rng(35);
  TransitionBatch batch;
  const int n = 6;
  batch.feat = random_mat(8, n, rng);
  batch.next_feat = random_mat(8, n, rng);
  batch.actions = random_mat(2, n, rng, 0.4);
  batch.rewards = random_mat(1, n, rng);
  batch.terminal.assign(n, 0);

  // gamma = 0 and Q == 0: y = r exactly, q_loss = mean(r^2) over both nets
  LossPair sac = sac_loss(agent, batch, 0.0, 36);
  const double expect = batch.rewards.array().square().mean();
  CHECK(sac.critic.item() == doctest::Approx(expect).epsilon(1e-12));

  // r = 0 as well: both Q nets equal the target exactly, loss is zero
  batch.rewards.setZero();
  LossPair sac0 = sac_loss(agent, batch, 0.0, 36);
  CHECK(sac0.critic.item() == 0.0);
}

TEST_CASE("sac: terminal steps bootstrap with zero") {
  Agent agent(tiny_agent_cfg(), 37);
  Rng rng(38);
  TransitionBatch batch;
  batch.feat = random_mat(8, 1, rng);
  batch.next_feat = random_mat(8, 1, rng);
  batch.actions = random_mat(2, 1, rng, 0.4);
  batch.rewards = Mat::Constant(1, 1, 0.7);
  batch.terminal.assign(1, 1);
  for (auto p : agent.q_params()) p.value_mut().setZero();
  agent.sync_targets();
  // terminal: y = r even with gamma > 0 and nonzero reward
  LossPair sac = sac_loss(agent, batch, 0.99, 39);
  CHECK(sac.critic.item() == doctest::Approx(0.7 * 0.7).epsilon(1e-12));
}

TEST_CASE("gradcheck: sac q loss and actor term on tiny nets") {
  AgentConfig acfg = tiny_agent_cfg();
  acfg.q_hidden = 4;
  acfg.q_layers = 2;
  acfg.actor_hidden = 4;
  acfg.actor_layers = 2;
  Agent agent(acfg, 40);
  Rng rng(41);
  TransitionBatch batch;
  batch.feat = random_mat(8, 4, rng);
  batch.next_feat = random_mat(8, 4, rng);
  batch.actions = random_mat(2, 4, rng, 0.4);
  batch.rewards = random_mat(1, 4, rng);
  batch.terminal.assign(4, 0);

  std::vector<Var> q_params = agent.q_params();
  auto fq = [&] { return sac_loss(agent, batch, 0.9, 42).critic; };
  CHECK(grad_check(fq, q_params, 1e-6) < 1e-4);

  std::vector<Var> actor_params = agent.actor_params();
  auto fa = [&] { return sac_loss(agent, batch, 0.9, 42).actor; };
  CHECK(grad_check(fa, actor_params, 1e-6) < 1e-4);
}

TEST_CASE("sac: no gradient leaks into targets or across objectives") {
  Agent agent(tiny_agent_cfg(), 43);
  Rng rng(44);
  TransitionBatch batch;
  batch.feat = random_mat(8, 4, rng);
  batch.next_feat = random_mat(8, 4, rng);
  batch.actions = random_mat(2, 4, rng, 0.4);
  batch.rewards = random_mat(1, 4, rng);
  batch.terminal.assign(4, 0);

  LossPair sac = sac_loss(agent, batch, 0.9, 45);
  backward(sac.critic);
  for (const auto& p : agent.q_target_params()) CHECK_FALSE(p.has_grad());
  for (const auto& p : agent.actor_params()) CHECK_FALSE(p.has_grad());
  zero_grads(agent.registry().params());

  backward(sac.actor);
  for (const auto& p : agent.q_params()) CHECK_FALSE(p.has_grad());
  for (const auto& p : agent.actor_params()) CHECK(p.has_grad());
  zero_grads(agent.registry().params());
}

TEST_CASE("hybrid loss arithmetic, exact subset at alpha = 0, linearity") {
  LossPair dreamer{Var::scalar(2.0), Var::scalar(0.5)};
  LossPair sac{Var::scalar(3.0), Var::scalar(0.25)};
  HybridLoss h1 = hybrid_loss(dreamer, sac, 1.0);
  CHECK(h1.actor.item() == doctest::Approx(5.0));
  HybridLoss h0 = hybrid_loss(dreamer, sac, 0.0);
  CHECK(h0.actor.node() == dreamer.actor.node());  // literally the same value
  HybridLoss h2 = hybrid_loss(dreamer, sac, 2.0);
  CHECK(h2.actor.item() - h1.actor.item() == doctest::Approx(sac.actor.item()));
  CHECK_THROWS_AS(hybrid_loss(dreamer, sac, -0.1), std::invalid_argument);
}

TEST_CASE("polyak update follows the exact convex combination") {
  Agent agent(tiny_agent_cfg(), 46);
  auto mains = agent.q_params();
  auto targets = agent.q_target_params();
  for (size_t i = 0; i < mains.size(); ++i)
    CHECK((mains[i].value() - targets[i].value()).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(47);
  for (auto p : mains) p.value_mut() = random_mat(p.rows(), p.cols(), rng);
  std::vector<Mat> old_targets;
  for (const auto& p : targets) old_targets.push_back(p.value());
  const double rho = 0.005;
  agent.polyak_update(rho);
  for (size_t i = 0; i < mains.size(); ++i) {
    Mat want = rho * mains[i].value() + (1.0 - rho) * old_targets[i];
    CHECK((targets[i].value() - want).cwiseAbs().maxCoeff() == 0.0);
  }
}
