#include "cvrl/world_model.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace cvrl;
using test::grad_check;
using test::random_mat;

namespace {

WorldModelConfig tiny_cfg() {
  WorldModelConfig cfg;
  cfg.image_size = 8;
  cfg.deter_dim = 6;
  cfg.stoch_dim = 3;
  cfg.embed_dim = 5;
  cfg.proj_dim = 4;
  cfg.hidden = 8;
  cfg.conv_depth = 2;
  return cfg;
}

SequenceBatch synthetic_batch(const WorldModelConfig& cfg, int B, int T, uint64_t seed) {
  Rng rng(seed);
  SequenceBatch b;
  b.batch = B;
  b.seq_len = T;
  b.observations = Mat::Zero(cfg.obs_dim(), static_cast<Eigen::Index>(B) * T);
  for (Eigen::Index j = 0; j < b.observations.cols(); ++j)
    for (Eigen::Index i = 0; i < b.observations.rows(); ++i)
      b.observations(i, j) = std::round(rng.uniform() * 255.0) / 255.0;
  b.actions = random_mat(cfg.action_dim, static_cast<Eigen::Index>(B) * T, rng, 0.5);
  b.rewards = random_mat(1, static_cast<Eigen::Index>(B) * T, rng);
  b.source.assign(static_cast<size_t>(B) * T, {0, 0});
  b.terminal.assign(static_cast<size_t>(B) * T, 0);
  return b;
}

}  // namespace

TEST_CASE("encode: shape contract, determinism, shape errors") {
  WorldModel wm(tiny_cfg(), 1);
  Rng rng(2);
  Var obs(random_mat(tiny_cfg().obs_dim(), 3, rng, 0.3));
  Var z1 = wm.encode(obs), z2 = wm.encode(obs);
  CHECK(z1.rows() == tiny_cfg().embed_dim);
  CHECK(z1.cols() == 3);
  CHECK((z1.value() - z2.value()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z1.value().allFinite());

  Var all_zero(Mat::Zero(tiny_cfg().obs_dim(), 1));
  CHECK(wm.encode(all_zero).value().allFinite());

  Var bad(Mat::Zero(17, 1));
  CHECK_THROWS_AS(wm.encode(bad), std::invalid_argument);
}

TEST_CASE("prior and posterior: stddev floor, dimensions, distinctness") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 3);
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    Var h(random_mat(cfg.deter_dim, 1, rng, 2.0));
    DiagGaussianVar p = wm.prior(h);
    CHECK(p.mean.rows() == cfg.stoch_dim);
    CHECK(p.stddev.value().minCoeff() >= cfg.eps_sigma);
  }
  Var h(random_mat(cfg.deter_dim, 1, rng));
  Var z(random_mat(cfg.embed_dim, 1, rng));
  DiagGaussianVar prior = wm.prior(h);
  DiagGaussianVar post = wm.posterior(h, z);
  CHECK(post.stddev.value().minCoeff() >= cfg.eps_sigma);
  CHECK((prior.mean.value() - post.mean.value()).cwiseAbs().maxCoeff() > 0.0);

  DiagGaussianVar post2 = wm.posterior(h, z);
  CHECK((post.mean.value() - post2.mean.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradcheck: prior mean w.r.t. h via central differences") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 5);
  Rng rng(6);
  Var h(random_mat(cfg.deter_dim, 2, rng), true);
  Mat probe = random_mat(cfg.stoch_dim, 2, rng);
  std::vector<Var> params{h};
  auto f = [&] { return sum_all(wm.prior(h).mean * Var(probe)); };
  CHECK(grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("deterministic_step: zero parameters fix the zero state") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 7);
  // zero out the GRU weights: gates sit at 1/2 and the candidate at 0
  for (size_t i = 0; i < wm.registry().names().size(); ++i)
    if (wm.registry().names()[i].rfind("rssm.gru", 0) == 0)
      { Var p = wm.registry().params()[i]; p.value_mut().setZero(); }
  Var h(Mat::Zero(cfg.deter_dim, 1)), s(Mat::Zero(cfg.stoch_dim, 1)),
      a(Mat::Zero(cfg.action_dim, 1));
  CHECK(wm.deterministic_step(h, s, a).value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deterministic_step: repeatable and gradient-exact w.r.t. the action") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 8);
  Rng rng(9);
  Var h(random_mat(cfg.deter_dim, 1, rng)), s(random_mat(cfg.stoch_dim, 1, rng));
  Var a(random_mat(cfg.action_dim, 1, rng, 0.5), true);
  Var h1 = wm.deterministic_step(h, s, a);
  Var h2 = wm.deterministic_step(h, s, a);
  CHECK((h1.value() - h2.value()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(h1.value().allFinite());

  Mat probe = random_mat(cfg.deter_dim, 1, rng);
  std::vector<Var> params{a};
  auto f = [&] { return sum_all(wm.deterministic_step(h, s, a) * Var(probe)); };
  CHECK(grad_check(f, params, 1e-6) < 1e-4);
}

TEST_CASE("reward head: unit variance log-likelihood identities") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 10);
  Rng rng(11);
  Var h(random_mat(cfg.deter_dim, 1, rng)), s(random_mat(cfg.stoch_dim, 1, rng));
  DiagGaussianVar head = wm.reward_head(h, s);
  CHECK(head.mean.rows() == 1);
  CHECK(head.stddev.value()(0, 0) == 1.0);

  const double mu = head.mean.value()(0, 0);
  const double at_mode = head.log_prob(Var(Mat::Constant(1, 1, mu))).item();
  CHECK(at_mode == doctest::Approx(-0.5 * std::log(2.0 * M_PI)));
  double prev = at_mode;
  for (double off : {0.5, 1.0, 2.0, 4.0}) {
    const double ll = head.log_prob(Var(Mat::Constant(1, 1, mu + off))).item();
    CHECK(ll < prev);
    prev = ll;
  }
}

TEST_CASE("decode: image-shaped mean, maximal likelihood at the mean") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 12);
  Rng rng(13);
  Var h(random_mat(cfg.deter_dim, 2, rng)), s(random_mat(cfg.stoch_dim, 2, rng));
  DiagGaussianVar dec = wm.decode(h, s);
  CHECK(dec.mean.rows() == cfg.obs_dim());
  CHECK(dec.mean.cols() == 2);

  Var at_mean = dec.log_prob(Var(dec.mean.value()));
  Mat jitter = dec.mean.value();
  jitter(0, 0) += 0.3;
  Var off_mean = dec.log_prob(Var(jitter));
  CHECK(at_mean.value()(0, 0) > off_mean.value()(0, 0));
  CHECK(at_mean.value()(0, 0) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) * static_cast<double>(cfg.obs_dim())));
}

TEST_CASE("compatibility: exp(0)=1 at zero projections, bilinear identity, positivity") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 14);
  auto set = [&](const std::string& name, const Mat& v) {
    Var p = wm.registry().find(name);
  p.value_mut() = v;
  };

  // zero projections: compatibility = exp(0) = 1 regardless of input
  set("compat.proj_obs.weight", Mat::Zero(cfg.proj_dim, cfg.embed_dim));
  set("compat.proj_obs.bias", Mat::Zero(cfg.proj_dim, 1));
  set("compat.proj_state.weight", Mat::Zero(cfg.proj_dim, cfg.feat_dim()));
  set("compat.proj_state.bias", Mat::Zero(cfg.proj_dim, 1));
  RSSMState st{Vec::Ones(cfg.deter_dim), Vec::Ones(cfg.stoch_dim)};
  CHECK(wm.compatibility(st, Vec::Ones(cfg.embed_dim)) == doctest::Approx(1.0));

  // W = I with both projections equal to u: log-compatibility = ||u||^2
  Rng rng(15);
  Vec u = random_mat(cfg.proj_dim, 1, rng).col(0);
  set("compat.bilinear_w", Mat::Identity(cfg.proj_dim, cfg.proj_dim));
  set("compat.proj_obs.bias", Mat(u));
  set("compat.proj_state.bias", Mat(u));
  // with zero weights the projections are exactly the biases
  CHECK(std::log(wm.compatibility(st, Vec::Zero(cfg.embed_dim))) ==
        doctest::Approx(u.squaredNorm()));

  // strictly positive scores for random parameters and inputs
  WorldModel fresh(cfg, 16);
  for (int i = 0; i < 1000; ++i) {
    RSSMState s2{random_mat(cfg.deter_dim, 1, rng).col(0),
                 random_mat(cfg.stoch_dim, 1, rng).col(0)};
    CHECK(fresh.compatibility(s2, random_mat(cfg.embed_dim, 1, rng).col(0)) > 0.0);
  }
}

TEST_CASE("filter_sequence: base case, determinism, and the small-noise limit") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 17);
  SequenceBatch one = synthetic_batch(cfg, 2, 1, 18);
  FilterResult fr = wm.filter_sequence(one, 5);
  CHECK(fr.states.size() == 1);
  CHECK(fr.priors.size() == 1);
  CHECK(fr.posteriors.size() == 1);

  SequenceBatch batch = synthetic_batch(cfg, 2, 4, 19);
  FilterResult a = wm.filter_sequence(batch, 7);
  FilterResult b = wm.filter_sequence(batch, 7);
  for (int t = 0; t < 4; ++t)
    CHECK((a.states[t].s.value() - b.states[t].s.value()).cwiseAbs().maxCoeff() == 0.0);
  FilterResult c = wm.filter_sequence(batch, 8);
  CHECK((a.states[3].s.value() - c.states[3].s.value()).cwiseAbs().maxCoeff() > 0.0);

  // force the posterior stddev onto its floor: samples collapse to the mean
  WorldModelConfig tight = cfg;
  tight.eps_sigma = 1e-12;
  WorldModel wm2(tight, 20);
  const int out_rows = 2 * tight.stoch_dim;
  Mat w1 = wm2.registry().find("rssm.posterior.l1.weight").value();
  w1.bottomRows(tight.stoch_dim).setZero();
  Var pw = wm2.registry().find("rssm.posterior.l1.weight");
  pw.value_mut() = w1;
  Mat b1 = wm2.registry().find("rssm.posterior.l1.bias").value();
  b1.bottomRows(tight.stoch_dim).setConstant(-60.0);  // softplus(-60) ~ 0
  Var pb = wm2.registry().find("rssm.posterior.l1.bias");
  pb.value_mut() = b1;
  CHECK(out_rows == b1.rows());

  FilterResult fr2 = wm2.filter_sequence(batch, 21);
  for (int t = 0; t < 4; ++t) {
    Mat diff = fr2.states[t].s.value() - fr2.posteriors[t].mean.value();
    CHECK(diff.cwiseAbs().maxCoeff() <= 3.0 * 1e-12);
  }
}

TEST_CASE("filter_sequence consumes shifted actions with a zero first action") {
  // changing the last action must not affect any filtered state (it is never
  // consumed); changing the first action must not either
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 22);
  SequenceBatch batch = synthetic_batch(cfg, 1, 3, 23);
  FilterResult a = wm.filter_sequence(batch, 3);
  SequenceBatch batch2 = batch;
  batch2.actions.col(batch2.col(0, 2)).setConstant(0.9);
  FilterResult b = wm.filter_sequence(batch2, 3);
  CHECK((a.states[2].h.value() - b.states[2].h.value()).cwiseAbs().maxCoeff() == 0.0);

  SequenceBatch batch3 = batch;
  batch3.actions.col(batch3.col(0, 1)).setConstant(-0.9);
  FilterResult c = wm.filter_sequence(batch3, 3);
  CHECK((a.states[2].h.value() - c.states[2].h.value()).cwiseAbs().maxCoeff() > 0.0);
}
