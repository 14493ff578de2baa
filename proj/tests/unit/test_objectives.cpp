#include "cvrl/objectives.hpp"

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
      b.observations(i, j) = rng.uniform();
  b.actions = random_mat(cfg.action_dim, static_cast<Eigen::Index>(B) * T, rng, 0.5);
  b.rewards = random_mat(1, static_cast<Eigen::Index>(B) * T, rng);
  b.source.assign(static_cast<size_t>(B) * T, {0, 0});
  b.terminal.assign(static_cast<size_t>(B) * T, 0);
  return b;
}

void override_param(const WorldModel& wm, const std::string& name, const Mat& v) {
  Var p = wm.registry().find(name);
  p.value_mut() = v;
}

// exact mutual information of a discrete joint
double discrete_mi(const Mat& joint) {
  Vec ps = joint.rowwise().sum(), po = joint.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j)
      if (joint(i, j) > 0.0) mi += joint(i, j) * std::log(joint(i, j) / (ps[i] * po[j]));
  return mi;
}

}  // namespace

TEST_CASE("info_nce: uniform scores give -log(K+1)") {
  for (int K : {1, 4, 79}) {
    Mat scores = Mat::Constant(10, K + 1, 0.37);
    CHECK(info_nce(scores) == doctest::Approx(-std::log(K + 1.0)));
  }
}

TEST_CASE("info_nce: dominant positive saturates to zero from below") {
  Mat scores = Mat::Zero(4, 5);
  scores.col(0).setConstant(60.0);
  const double v = info_nce(scores);
  CHECK(v <= 0.0);
  CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("info_nce: value is nonpositive and finite up to +-50 log-scores") {
  Rng rng(3);
  Mat scores = 50.0 * random_mat(20, 8, rng).array().tanh().matrix();
  const double v = info_nce(scores);
  CHECK(std::isfinite(v));
  CHECK(v <= 0.0);
  CHECK_THROWS_AS(info_nce(Mat::Zero(3, 1)), std::invalid_argument);
}

TEST_CASE("info_nce square layout agrees with the anchor-row layout") {
  Rng rng(4);
  Mat logits = random_mat(6, 6, rng);
  const double graph = info_nce_square(Var(logits)).item();
  // rearrange: anchor j scores its positive (j,j) first, negatives after
  Mat rows(6, 6);
  for (int j = 0; j < 6; ++j) {
    rows(j, 0) = logits(j, j);
    int k = 1;
    for (int i = 0; i < 6; ++i)
      if (i != j) rows(j, k++) = logits(i, j);
  }
  CHECK(graph == doctest::Approx(info_nce(rows)).epsilon(1e-12));
}

TEST_CASE("info_nce bound: never above the exact MI on a 4x4 discrete joint") {
  Rng rng(5);
  // random joint, biased toward the diagonal so the MI is clearly positive
  Mat joint = Mat::Zero(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) joint(i, j) = rng.uniform() + (i == j ? 2.0 : 0.0);
  joint /= joint.sum();
  const double mi = discrete_mi(joint);
  Vec ps = joint.rowwise().sum(), po = joint.colwise().sum();

  // conditional row sampler and the optimal score f = p(o|s)/p(o)
  const int K = 7, N = 20000;
  Mat scores(N, K + 1);
  Vec draws_mean = Vec::Zero(1);
  auto sample_row = [&](const Vec& p) {
    double u = rng.uniform(), acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
  };
  std::vector<double> values(N);
  for (int n = 0; n < N; ++n) {
    const int s = sample_row(ps);
    Vec cond = joint.row(s).transpose() / ps[s];
    const int o = sample_row(cond);
    scores(n, 0) = std::log(joint(s, o) / (ps[s] * po[o]));
    for (int k = 1; k <= K; ++k) {
      const int neg = sample_row(po);
      scores(n, k) = std::log(joint(s, neg) / (ps[s] * po[neg]));
    }
    Mat one = scores.row(n);
    values[static_cast<size_t>(n)] = info_nce(one);
  }
  const double value = info_nce(scores);
  double var = 0.0;
  for (double v : values) var += (v - value) * (v - value);
  const double se = std::sqrt(var / N / N);
  CHECK(value <= mi + 3.0 * se);
  // with the optimal score the bound should be informative, not vacuous
  CHECK(value > -std::log(static_cast<double>(K + 1)));
}

TEST_CASE("elbo: posterior forced onto the prior zeroes the clipped KL") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 6);
  // posterior head mirrors the prior head and ignores the embedding
  Mat prior_w0 = wm.registry().find("rssm.prior.l0.weight").value();
  Mat post_w0 = Mat::Zero(cfg.hidden, cfg.deter_dim + cfg.embed_dim);
  post_w0.leftCols(cfg.deter_dim) = prior_w0;
  override_param(wm, "rssm.posterior.l0.weight", post_w0);
  override_param(wm, "rssm.posterior.l0.bias",
                 wm.registry().find("rssm.prior.l0.bias").value());
  override_param(wm, "rssm.posterior.l1.weight",
                 wm.registry().find("rssm.prior.l1.weight").value());
  override_param(wm, "rssm.posterior.l1.bias",
                 wm.registry().find("rssm.prior.l1.bias").value());

  SequenceBatch batch = synthetic_batch(cfg, 2, 3, 7);
  ModelLossResult res = elbo_loss(wm, batch, 11, /*free_nats=*/1.0);
  CHECK(res.parts.kl == 0.0);
}

TEST_CASE("loss bookkeeping: total = -(obs + reward_ll - kl)") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 8);
  SequenceBatch batch = synthetic_batch(cfg, 2, 3, 9);
  for (auto objective :
       {ModelObjective::elbo, ModelObjective::celbo, ModelObjective::reward_only}) {
    ModelLossResult res = model_loss(wm, batch, 13, objective, 1.0);
    CHECK(res.parts.total ==
          doctest::Approx(-(res.parts.observation + res.parts.reward_ll - res.parts.kl))
              .epsilon(1e-9));
    CHECK(std::isfinite(res.parts.total));
  }
}

TEST_CASE("celbo: B*T = 2 gives each anchor exactly one negative") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 10);
  SequenceBatch batch = synthetic_batch(cfg, 1, 2, 11);
  ModelLossResult res = celbo_loss(wm, batch, 15);
  CHECK(std::isfinite(res.parts.observation));
  // the pooled logit matrix is 2x2: one positive + one negative per anchor
  FilterResult fr = wm.filter_sequence(batch, 15);
  Var logits = wm.compatibility_logits(fr.pooled_feat(), fr.pooled_embed());
  CHECK(logits.rows() == 2);
  CHECK(logits.cols() == 2);
}

TEST_CASE("celbo: state-independent compatibility scores give -log(B*T)") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 12);
  override_param(wm, "compat.bilinear_w", Mat::Zero(cfg.proj_dim, cfg.proj_dim));
  SequenceBatch batch = synthetic_batch(cfg, 2, 3, 13);
  ModelLossResult res = celbo_loss(wm, batch, 17);
  CHECK(res.parts.observation == doctest::Approx(-std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("celbo and elbo share KL and reward terms under the same seed") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 14);
  SequenceBatch batch = synthetic_batch(cfg, 2, 3, 15);
  ModelLossResult a = celbo_loss(wm, batch, 19);
  ModelLossResult b = elbo_loss(wm, batch, 19);
  CHECK(a.parts.kl == b.parts.kl);
  CHECK(a.parts.reward_ll == b.parts.reward_ll);
  CHECK(a.parts.observation != b.parts.observation);
}

TEST_CASE("reward_only: no gradient reaches decoder or compatibility parameters") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 16);
  SequenceBatch batch = synthetic_batch(cfg, 2, 3, 17);
  ModelLossResult res = model_loss(wm, batch, 21, ModelObjective::reward_only, 1.0);
  backward(res.total);
  for (const auto& p : wm.decoder_params()) CHECK_FALSE(p.has_grad());
  for (const auto& p : wm.compat_params()) CHECK_FALSE(p.has_grad());
  // while the shared encoder and dynamics do learn
  CHECK(wm.registry().find("rssm.gru.w_ih").has_grad());
  zero_grads(wm.params());
}

TEST_CASE("gradcheck: celbo total w.r.t. the bilinear matrix and projections") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 18);
  SequenceBatch batch = synthetic_batch(cfg, 1, 2, 19);
  std::vector<Var> params{wm.registry().find("compat.bilinear_w"),
                          wm.registry().find("compat.proj_state.weight")};
  auto f = [&] { return celbo_loss(wm, batch, 23).total; };
  CHECK(grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("free_nats = 0 disables the clip") {
  WorldModelConfig cfg = tiny_cfg();
  WorldModel wm(cfg, 20);
  SequenceBatch batch = synthetic_batch(cfg, 2, 2, 21);
  ModelLossResult clipped = celbo_loss(wm, batch, 25, 1e6);
  ModelLossResult raw = model_loss(wm, batch, 25, ModelObjective::celbo, 0.0);
  CHECK(clipped.parts.kl == 0.0);
  CHECK(raw.parts.kl > 0.0);
}
