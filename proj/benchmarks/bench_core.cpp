#include "cvrl/agent.hpp"
#include "cvrl/objectives.hpp"
#include "cvrl/planner.hpp"
#include "cvrl/world_model.hpp"

#include <benchmark/benchmark.h>

using namespace cvrl;

namespace {

WorldModelConfig desk_cfg() {
  WorldModelConfig cfg;  // library defaults
  return cfg;
}

SequenceBatch random_batch(const WorldModelConfig& cfg, int B, int T, uint64_t seed) {
  Rng rng(seed);
  SequenceBatch b;
  b.batch = B;
  b.seq_len = T;
  const Eigen::Index n = static_cast<Eigen::Index>(B) * T;
  b.observations.resize(cfg.obs_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < cfg.obs_dim(); ++i) b.observations(i, j) = rng.uniform();
  b.actions.resize(cfg.action_dim, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int i = 0; i < cfg.action_dim; ++i) b.actions(i, j) = rng.uniform(-1.0, 1.0);
  b.rewards.resize(1, n);
  for (Eigen::Index j = 0; j < n; ++j) b.rewards(0, j) = rng.normal();
  b.source.assign(static_cast<size_t>(n), {0, 0});
  b.terminal.assign(static_cast<size_t>(n), 0);
  return b;
}

AgentConfig agent_cfg(const WorldModelConfig& w) {
  AgentConfig cfg;
  cfg.deter_dim = w.deter_dim;
  cfg.stoch_dim = w.stoch_dim;
  cfg.action_dim = w.action_dim;
  return cfg;
}

void bench_encode(benchmark::State& state) {
  WorldModelConfig cfg = desk_cfg();
  WorldModel wm(cfg, 1);
  SequenceBatch batch = random_batch(cfg, 8, 10, 2);
  NoGradGuard ng;
  for (auto _ : state) {
    Var z = wm.encode(Var(batch.observations));
    benchmark::DoNotOptimize(z.value().sum());
  }
}
BENCHMARK(bench_encode)->Unit(benchmark::kMillisecond);

void bench_celbo_backward(benchmark::State& state) {
  WorldModelConfig cfg = desk_cfg();
  WorldModel wm(cfg, 1);
  SequenceBatch batch = random_batch(cfg, 8, 10, 2);
  for (auto _ : state) {
    ModelLossResult res = celbo_loss(wm, batch, 3);
    backward(res.total);
    zero_grads(wm.params());
  }
}
BENCHMARK(bench_celbo_backward)->Unit(benchmark::kMillisecond);

void bench_elbo_backward(benchmark::State& state) {
  WorldModelConfig cfg = desk_cfg();
  WorldModel wm(cfg, 1);
  SequenceBatch batch = random_batch(cfg, 8, 10, 2);
  for (auto _ : state) {
    ModelLossResult res = elbo_loss(wm, batch, 3);
    backward(res.total);
    zero_grads(wm.params());
  }
}
BENCHMARK(bench_elbo_backward)->Unit(benchmark::kMillisecond);

void bench_imagination(benchmark::State& state) {
  WorldModelConfig cfg = desk_cfg();
  WorldModel wm(cfg, 1);
  Agent agent(agent_cfg(cfg), 1);
  Rng rng(4);
  std::vector<RSSMState> starts(static_cast<size_t>(state.range(0)));
  for (auto& s : starts) {
    s.h = Vec::Zero(cfg.deter_dim);
    s.s = Vec::Zero(cfg.stoch_dim);
    for (Eigen::Index i = 0; i < s.h.size(); ++i) s.h[i] = rng.normal();
    for (Eigen::Index i = 0; i < s.s.size(); ++i) s.s[i] = rng.normal();
  }
  for (auto _ : state) {
    FreezeGuard freeze(wm.params());
    ImaginedBatchVar roll = imagine_batch(wm, agent, starts, 15, 5);
    LossPair pair = dreamer_loss(agent, roll, 0.99, 0.95);
    backward(pair.actor);
    zero_grads(wm.params());
    zero_grads(agent.registry().params());
  }
}
BENCHMARK(bench_imagination)->Arg(32)->Arg(80)->Unit(benchmark::kMillisecond);

void bench_plan_step(benchmark::State& state) {
  WorldModelConfig cfg = desk_cfg();
  WorldModel wm(cfg, 1);
  Agent agent(agent_cfg(cfg), 1);
  Rng rng(6);
  RSSMState s{Vec::Zero(cfg.deter_dim), Vec::Zero(cfg.stoch_dim)};
  for (Eigen::Index i = 0; i < s.h.size(); ++i) s.h[i] = rng.normal();
  PlannerConfig pcfg;
  pcfg.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) {
    PlanResult res = plan(wm, agent, s, pcfg, 7);
    benchmark::DoNotOptimize(res.value_after);
  }
}
BENCHMARK(bench_plan_step)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
