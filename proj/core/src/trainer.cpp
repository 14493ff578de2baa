#include "cvrl/trainer.hpp"

#include "cvrl/checkpoint.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace cvrl {

namespace {

bool all_finite(const LossBreakdown& parts) {
  return std::isfinite(parts.total) && std::isfinite(parts.observation) &&
         std::isfinite(parts.reward_ll) && std::isfinite(parts.kl);
}

}  // namespace

Trainer::Trainer(const Config& cfg)
    : cfg_(cfg),
      variant_(cfg.variant_enum()),
      env_(cfg.env_config()),
      wm_(cfg.world_model_config(), static_cast<uint64_t>(cfg.seed)),
      agent_(cfg.agent_config(), static_cast<uint64_t>(cfg.seed)),
      buffer_(static_cast<size_t>(cfg.replay_capacity), cfg.seq_len) {
  cfg_.validate();
  opt_model_ = Adam(wm_.params(), cfg_.lr_model, 0.9, 0.999, cfg_.adam_eps, cfg_.grad_clip);
  opt_value_ =
      Adam(agent_.value_params(), cfg_.lr_value, 0.9, 0.999, cfg_.adam_eps, cfg_.grad_clip);
  opt_actor_ =
      Adam(agent_.actor_params(), cfg_.lr_actor, 0.9, 0.999, cfg_.adam_eps, cfg_.grad_clip);
  opt_sac_ = Adam(agent_.q_params(), cfg_.lr_sac, 0.9, 0.999, cfg_.adam_eps, cfg_.grad_clip);
}

ModelObjective Trainer::model_objective() const {
  switch (variant_) {
    case Variant::generative: return ModelObjective::elbo;
    case Variant::reward_only: return ModelObjective::reward_only;
    default: return ModelObjective::celbo;
  }
}

uint64_t Trainer::sub_seed(std::string_view tag, uint64_t counter) const {
  return derive_seed(static_cast<uint64_t>(cfg_.seed), tag, counter);
}

void Trainer::zero_all_grads() {
  zero_grads(wm_.params());
  zero_grads(agent_.registry().params());
}

std::vector<RSSMState> Trainer::imagination_starts(const FilterResult& filter) const {
  std::vector<RSSMState> starts;
  const int total = filter.batch * filter.seq_len;
  const int want = cfg_.imagine_starts > 0 ? std::min(cfg_.imagine_starts, total) : total;
  starts.reserve(static_cast<size_t>(want));
  // deterministic subset: stride across the pool
  const double stride = static_cast<double>(total) / want;
  for (int i = 0; i < want; ++i) {
    const int flat = static_cast<int>(i * stride);
    const int t = flat / filter.batch;
    const int b = flat % filter.batch;
    starts.push_back({filter.states[static_cast<size_t>(t)].h.value().col(b),
                      filter.states[static_cast<size_t>(t)].s.value().col(b)});
  }
  return starts;
}

TransitionBatch Trainer::make_transitions(const FilterResult& filter,
                                          const SequenceBatch& batch) const {
  const int B = filter.batch, T = filter.seq_len;
  const Eigen::Index feat_dim = wm_.config().feat_dim();

  // count: (T-1) per sequence plus a terminal step at the window end
  int extra = 0;
  for (int b = 0; b < B; ++b)
    if (batch.terminal[static_cast<size_t>(batch.col(b, T - 1))]) ++extra;
  const Eigen::Index n = static_cast<Eigen::Index>(B) * (T - 1) + extra;

  TransitionBatch out;
  out.feat.resize(feat_dim, n);
  out.next_feat.resize(feat_dim, n);
  out.actions.resize(batch.actions.rows(), n);
  out.rewards.resize(1, n);
  out.terminal.assign(static_cast<size_t>(n), 0);

  auto feat_at = [&](int b, int t) {
    Vec f(feat_dim);
    f << filter.states[static_cast<size_t>(t)].h.value().col(b),
        filter.states[static_cast<size_t>(t)].s.value().col(b);
    return f;
  };

  Eigen::Index i = 0;
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T - 1; ++t, ++i) {
      const Eigen::Index c = batch.col(b, t);
      out.feat.col(i) = feat_at(b, t);
      out.next_feat.col(i) = feat_at(b, t + 1);
      out.actions.col(i) = batch.actions.col(c);
      out.rewards(0, i) = batch.rewards(0, c);
      out.terminal[static_cast<size_t>(i)] = batch.terminal[static_cast<size_t>(c)];
    }
    const Eigen::Index last = batch.col(b, T - 1);
    if (batch.terminal[static_cast<size_t>(last)]) {
      out.feat.col(i) = feat_at(b, T - 1);
      out.next_feat.col(i).setZero();  // unused: terminal bootstraps with 0
      out.actions.col(i) = batch.actions.col(last);
      out.rewards(0, i) = batch.rewards(0, last);
      out.terminal[static_cast<size_t>(i)] = 1;
      ++i;
    }
  }
  return out;
}

TrainStepMetrics Trainer::train_step(const SequenceBatch& batch) {
  TrainStepMetrics out;
  ++step_;

  // (1) model optimizer: representation objective on world parameters only
  ModelLossResult model =
      model_loss(wm_, batch, sub_seed("model.noise", static_cast<uint64_t>(step_)),
                 model_objective(), cfg_.free_nats);
  out.model = model.parts;
  if (!all_finite(model.parts)) {
    out.ok = false;
    out.error = "non-finite model loss";
    zero_all_grads();
    return out;
  }
  backward(model.total);
  opt_model_.step();
  zero_all_grads();

  // (2) imagination from detached posterior states (post-update parameters,
  // world model frozen so gradients flow into the actor only)
  std::vector<RSSMState> starts = imagination_starts(model.filter);
  LossPair dreamer;
  {
    FreezeGuard freeze_world(wm_.params());
    ImaginedBatchVar rollout = imagine_batch(
        wm_, agent_, starts, cfg_.imagine_horizon,
        sub_seed("imagine.noise", static_cast<uint64_t>(step_)));
    dreamer = dreamer_loss(agent_, rollout, cfg_.gamma, cfg_.lambda);
  }
  out.dreamer_actor = dreamer.actor.item();
  out.critic_loss = dreamer.critic.item();
  if (!std::isfinite(out.dreamer_actor) || !std::isfinite(out.critic_loss)) {
    out.ok = false;
    out.error = "non-finite imagination loss";
    zero_all_grads();
    return out;
  }

  // (3) value optimizer: critic regression only
  backward(dreamer.critic);
  opt_value_.step();
  zero_all_grads();

  // (4) actor optimizer: hybrid objective
  LossPair sac;
  if (uses_sac()) {
    TransitionBatch transitions = make_transitions(model.filter, batch);
    sac = sac_loss(agent_, transitions, cfg_.gamma,
                   sub_seed("sac.noise", static_cast<uint64_t>(step_)));
    out.sac_actor = sac.actor.item();
    out.q_loss = sac.critic.item();
    if (!std::isfinite(out.sac_actor) || !std::isfinite(out.q_loss)) {
      out.ok = false;
      out.error = "non-finite sac loss";
      zero_all_grads();
      return out;
    }
  }
  HybridLoss hybrid = uses_sac() ? hybrid_loss(dreamer, sac, cfg_.alpha)
                                 : HybridLoss{dreamer.actor, dreamer.critic, Var()};
  out.actor_loss = hybrid.actor.item();
  backward(hybrid.actor);
  opt_actor_.step();
  zero_all_grads();

  // (5) SAC optimizer: twin-Q update + polyak-averaged targets
  if (uses_sac()) {
    backward(sac.critic);
    opt_sac_.step();
    zero_all_grads();
    agent_.polyak_update(cfg_.polyak_rho);
  }
  return out;
}

Episode Trainer::collect_episode(bool use_planner, double exploration_noise, uint64_t seed,
                                 double* plan_value_delta) {
  Rng post_rng(derive_seed(seed, "collect.posterior"));
  Rng noise_rng(derive_seed(seed, "collect.noise"));

  auto [env_state, obs] = env_.reset(derive_seed(seed, "collect.env"));
  RSSMState state = wm_.initial_state();
  Vec prev_action = Vec::Zero(env_.config().action_dim);

  Episode ep;
  double delta_sum = 0.0;
  int delta_count = 0;
  PlannerConfig plan_cfg = cfg_.planner_config();
  while (true) {
    state = wm_.filter_step(state, prev_action, obs, post_rng);
    Vec action;
    if (use_planner) {
      PlanResult plan_res = plan(wm_, agent_, state, plan_cfg,
                                 derive_seed(seed, "collect.plan", ep.observations.size()));
      action = plan_res.action;
      delta_sum += plan_res.value_after - plan_res.value_before;
      ++delta_count;
    } else {
      action = agent_.act(state, post_rng, /*deterministic=*/true).action;
    }
    if (exploration_noise > 0.0) {
      for (Eigen::Index i = 0; i < action.size(); ++i)
        action[i] = std::clamp(action[i] + exploration_noise * noise_rng.normal(), -1.0, 1.0);
    }
    auto [next_state, result] = env_.step(env_state, action);
    ep.observations.push_back(std::move(obs));
    ep.actions.push_back(action);
    ep.rewards.push_back(result.reward);
    ++env_steps_;
    env_state = next_state;
    obs = std::move(result.observation);
    prev_action = action;
    if (result.done) break;
  }
  if (plan_value_delta && delta_count > 0) *plan_value_delta = delta_sum / delta_count;
  return ep;
}

Episode Trainer::collect_random_episode(uint64_t seed) {
  Rng rng(derive_seed(seed, "collect.random"));
  auto [env_state, obs] = env_.reset(derive_seed(seed, "collect.env"));
  Episode ep;
  while (true) {
    Vec action(env_.config().action_dim);
    for (Eigen::Index i = 0; i < action.size(); ++i) action[i] = rng.uniform(-1.0, 1.0);
    auto [next_state, result] = env_.step(env_state, action);
    ep.observations.push_back(std::move(obs));
    ep.actions.push_back(action);
    ep.rewards.push_back(result.reward);
    ++env_steps_;
    env_state = next_state;
    obs = std::move(result.observation);
    if (result.done) break;
  }
  return ep;
}

EvalStats Trainer::evaluate(int episodes, uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  std::vector<double> returns;
  returns.reserve(static_cast<size_t>(episodes));
  PlannerConfig plan_cfg = cfg_.planner_config();
  for (int e = 0; e < episodes; ++e) {
    const uint64_t ep_seed = derive_seed(seed, "eval.episode", static_cast<uint64_t>(e));
    Rng post_rng(derive_seed(ep_seed, "eval.posterior"));
    auto [env_state, obs] = env_.reset(derive_seed(ep_seed, "eval.env"));
    RSSMState state = wm_.initial_state();
    Vec prev_action = Vec::Zero(env_.config().action_dim);
    double ret = 0.0;
    int t = 0;
    while (true) {
      state = wm_.filter_step(state, prev_action, obs, post_rng);
      Vec action;
      if (uses_planner()) {
        action = plan(wm_, agent_, state, plan_cfg,
                      derive_seed(ep_seed, "eval.plan", static_cast<uint64_t>(t)))
                     .action;
      } else {
        action = agent_.act(state, post_rng, /*deterministic=*/true).action;
      }
      auto [next_state, result] = env_.step(env_state, action);
      ret += result.reward;
      env_state = next_state;
      obs = std::move(result.observation);
      prev_action = action;
      ++t;
      if (result.done) break;
    }
    returns.push_back(ret);
  }

  EvalStats stats;
  stats.episodes = episodes;
  stats.min = returns[0];
  stats.max = returns[0];
  double sum = 0.0;
  for (double r : returns) {
    sum += r;
    stats.min = std::min(stats.min, r);
    stats.max = std::max(stats.max, r);
  }
  stats.mean = sum / episodes;
  double sq = 0.0;
  for (double r : returns) sq += (r - stats.mean) * (r - stats.mean);
  stats.stddev = std::sqrt(sq / episodes);
  return stats;
}

void Trainer::run(const std::string& out_dir, bool resume,
                  const std::function<void(const MetricsRecord&)>& observer) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw OutputError("cannot create output directory: " + out_dir);
  {
    std::ofstream probe(out_dir + "/.writable", std::ios::trunc);
    if (!probe) throw OutputError("output directory is not writable: " + out_dir);
  }
  fs::remove(out_dir + "/.writable", ec);

  const std::string ckpt_path = out_dir + "/checkpoint.cvrl";
  const std::string replay_path = out_dir + "/replay.bin";
  if (resume) {
    if (!fs::exists(ckpt_path)) throw CheckpointError("no checkpoint to resume: " + ckpt_path);
    load_checkpoint(ckpt_path);
    if (cfg_.checkpoint_replay && fs::exists(replay_path)) buffer_.load(replay_path);
  }

  {
    std::ofstream cfg_out(out_dir + "/config.cfg");
    cfg_out << cfg_.to_text();
  }
  MetricsWriter writer;
  writer.open(out_dir + "/metrics.jsonl", resume);

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  auto save_all = [&] {
    save_checkpoint(ckpt_path);
    if (cfg_.checkpoint_replay) buffer_.save(replay_path);
  };

  // episodes that end before one full training window cannot be stored
  auto try_append = [&](const Episode& ep) {
    if (ep.length() < static_cast<size_t>(cfg_.seq_len)) return false;
    buffer_.append_episode(ep);
    return true;
  };

  // random-policy warmup on a fresh run
  if (buffer_.num_episodes() == 0) {
    int appended = 0;
    while (appended < cfg_.warmup_episodes) {
      Episode ep = collect_random_episode(
          sub_seed("episode", static_cast<uint64_t>(episodes_collected_)));
      ++episodes_collected_;
      if (try_append(ep)) ++appended;
    }
  }

  while (step_ < cfg_.train_steps) {
    MetricsRecord rec;

    if ((step_ % cfg_.collect_interval) == 0) {
      double plan_delta = 0.0;
      bool has_delta = false;
      Episode ep;
      if (uses_planner()) {
        double d = 0.0;
        ep = collect_episode(true, cfg_.exploration_noise,
                             sub_seed("episode", static_cast<uint64_t>(episodes_collected_)), &d);
        plan_delta = d;
        has_delta = true;
      } else {
        ep = collect_episode(false, cfg_.exploration_noise,
                             sub_seed("episode", static_cast<uint64_t>(episodes_collected_)));
      }
      ++episodes_collected_;
      rec.collect_return = ep.total_return();
      if (has_delta) rec.plan_value_delta = plan_delta;
      try_append(ep);
    }

    SequenceBatch batch = buffer_.sample_batch(
        cfg_.batch_size, cfg_.seq_len, sub_seed("batch", static_cast<uint64_t>(step_ + 1)));
    TrainStepMetrics tm = train_step(batch);

    rec.step = step_;
    rec.env_steps = env_steps_;
    rec.ok = tm.ok;
    rec.error = tm.error;
    rec.model = tm.model;
    rec.dreamer_actor = tm.dreamer_actor;
    rec.sac_actor = tm.sac_actor;
    rec.actor_loss = tm.actor_loss;
    rec.critic_loss = tm.critic_loss;
    rec.q_loss = tm.q_loss;

    if (cfg_.eval_interval > 0 && (step_ % cfg_.eval_interval) == 0) {
      rec.eval = evaluate(cfg_.eval_episodes, sub_seed("eval", static_cast<uint64_t>(step_)));
    }
    rec.wall_clock = wall();
    writer.write(rec);
    if (observer) observer(rec);

    if (cfg_.checkpoint_interval > 0 && (step_ % cfg_.checkpoint_interval) == 0) save_all();
  }

  // final eval + checkpoint
  MetricsRecord final_rec;
  final_rec.step = step_;
  final_rec.env_steps = env_steps_;
  final_rec.eval = evaluate(cfg_.eval_episodes, sub_seed("eval.final", 0));
  final_rec.wall_clock = wall();
  writer.write(final_rec);
  if (observer) observer(final_rec);
  save_all();
}

void Trainer::save_checkpoint(const std::string& path) const {
  Checkpoint ck;
  ck.set_config_hash(cfg_.hash());
  const auto& wreg = wm_.registry();
  for (size_t i = 0; i < wreg.names().size(); ++i)
    ck.add("world." + wreg.names()[i], wreg.params()[i].value());
  const auto& areg = agent_.registry();
  for (size_t i = 0; i < areg.names().size(); ++i)
    ck.add("agent." + areg.names()[i], areg.params()[i].value());

  auto add_opt = [&ck](const char* tag, const Adam& opt) {
    for (size_t i = 0; i < opt.params().size(); ++i) {
      ck.add(std::string(tag) + ".m." + std::to_string(i),
             const_cast<Adam&>(opt).moment1()[i]);
      ck.add(std::string(tag) + ".v." + std::to_string(i),
             const_cast<Adam&>(opt).moment2()[i]);
    }
  };
  add_opt("opt_model", opt_model_);
  add_opt("opt_value", opt_value_);
  add_opt("opt_actor", opt_actor_);
  add_opt("opt_sac", opt_sac_);

  nlohmann::ordered_json meta;
  meta["step"] = step_;
  meta["env_steps"] = env_steps_;
  meta["episodes_collected"] = episodes_collected_;
  meta["opt_steps"] = {{"model", opt_model_.step_count()},
                       {"value", opt_value_.step_count()},
                       {"actor", opt_actor_.step_count()},
                       {"sac", opt_sac_.step_count()}};
  meta["config"] = cfg_.to_text();
  ck.set_metadata(meta.dump());
  ck.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);

  auto restore_registry = [&ck](const std::string& prefix, const ParamRegistry& reg) {
    for (size_t i = 0; i < reg.names().size(); ++i) {
      const Mat& m = ck.get(prefix + reg.names()[i]);
      Var p = reg.params()[i];
      if (m.rows() != p.rows() || m.cols() != p.cols())
        throw CheckpointError("checkpoint shape mismatch for " + prefix + reg.names()[i]);
      p.value_mut() = m;
    }
  };
  restore_registry("world.", wm_.registry());
  restore_registry("agent.", agent_.registry());

  nlohmann::json meta = nlohmann::json::parse(ck.metadata());
  auto restore_opt = [&ck, &meta](const char* tag, Adam& opt, const char* key) {
    for (size_t i = 0; i < opt.params().size(); ++i) {
      opt.moment1()[i] = ck.get(std::string(tag) + ".m." + std::to_string(i));
      opt.moment2()[i] = ck.get(std::string(tag) + ".v." + std::to_string(i));
    }
    opt.set_step_count(meta["opt_steps"][key].get<int64_t>());
  };
  restore_opt("opt_model", opt_model_, "model");
  restore_opt("opt_value", opt_value_, "value");
  restore_opt("opt_actor", opt_actor_, "actor");
  restore_opt("opt_sac", opt_sac_, "sac");

  step_ = meta["step"].get<int64_t>();
  env_steps_ = meta["env_steps"].get<int64_t>();
  episodes_collected_ = meta["episodes_collected"].get<int64_t>();
}

}  // namespace cvrl
