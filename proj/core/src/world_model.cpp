#include "cvrl/world_model.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

int WorldModelConfig::conv_levels() const {
  int levels = 0;
  int sz = image_size;
  while (sz > 2 && levels < 4) {
    sz /= 2;
    ++levels;
  }
  return levels;
}

Var FilterResult::pooled_feat() const {
  std::vector<Var> feats;
  feats.reserve(states.size());
  for (const auto& st : states) feats.push_back(st.feat());
  return hcat(feats);
}

Var FilterResult::pooled_embed() const { return hcat(embeddings); }

WorldModel::WorldModel(const WorldModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.image_size < 8 || (cfg_.image_size & (cfg_.image_size - 1)) != 0)
    throw std::invalid_argument("WorldModel: image_size must be a power of two >= 8");

  Rng rng(derive_seed(seed, "world_model.init"));
  const int levels = cfg_.conv_levels();

  int ch = cfg_.channels;
  int sz = cfg_.image_size;
  for (int i = 0; i < levels; ++i) {
    ConvDims d;
    d.in_c = ch;
    d.in_h = sz;
    d.in_w = sz;
    d.out_c = cfg_.conv_depth << i;
    enc_convs_.emplace_back(d, rng, reg_, "encoder.conv" + std::to_string(i));
    ch = d.out_c;
    sz = d.out_h();
  }
  const int conv_flat = ch * sz * sz;
  enc_fc_ = Linear(conv_flat, cfg_.embed_dim, rng, reg_, "encoder.fc");

  gru_ = GRUCell(cfg_.stoch_dim + cfg_.action_dim, cfg_.deter_dim, rng, reg_, "rssm.gru");
  prior_head_ = MLP(cfg_.deter_dim, cfg_.hidden, 2 * cfg_.stoch_dim, 2, rng, reg_, "rssm.prior");
  posterior_head_ = MLP(cfg_.deter_dim + cfg_.embed_dim, cfg_.hidden, 2 * cfg_.stoch_dim, 2, rng,
                        reg_, "rssm.posterior");
  reward_head_ = MLP(static_cast<int>(cfg_.feat_dim()), cfg_.hidden, 1, 3, rng, reg_, "reward");

  dec_fc_ = Linear(static_cast<int>(cfg_.feat_dim()), conv_flat, rng, reg_, "decoder.fc");
  {
    int dch = ch;
    int dsz = sz;
    for (int i = 0; i < levels; ++i) {
      ConvDims d;
      d.in_c = dch;
      d.in_h = dsz;
      d.in_w = dsz;
      d.out_c = i == levels - 1 ? cfg_.channels : (cfg_.conv_depth << (levels - 2 - i));
      dec_convs_.emplace_back(d, rng, reg_, "decoder.conv" + std::to_string(i));
      dch = d.out_c;
      dsz = d.tout_h();
    }
    if (dsz != cfg_.image_size)
      throw std::logic_error("WorldModel: decoder does not reproduce the input resolution");
  }

  proj_obs_ = Linear(cfg_.embed_dim, cfg_.proj_dim, rng, reg_, "compat.proj_obs");
  proj_state_ = Linear(static_cast<int>(cfg_.feat_dim()), cfg_.proj_dim, rng, reg_,
                       "compat.proj_state");
  bilinear_w_ = reg_.add(
      "compat.bilinear_w",
      Var(glorot_uniform(cfg_.proj_dim, cfg_.proj_dim, cfg_.proj_dim, cfg_.proj_dim, rng)));
}

std::vector<Var> WorldModel::decoder_params() const {
  std::vector<Var> out;
  for (size_t i = 0; i < reg_.names().size(); ++i)
    if (reg_.names()[i].rfind("decoder.", 0) == 0) out.push_back(reg_.params()[i]);
  return out;
}

std::vector<Var> WorldModel::compat_params() const {
  std::vector<Var> out;
  for (size_t i = 0; i < reg_.names().size(); ++i)
    if (reg_.names()[i].rfind("compat.", 0) == 0) out.push_back(reg_.params()[i]);
  return out;
}

Var WorldModel::encode(const Var& obs) const {
  if (obs.rows() != cfg_.obs_dim())
    throw std::invalid_argument("WorldModel::encode: observation shape mismatch");
  Var x = obs;
  for (const auto& conv : enc_convs_) x = silu_(conv(x));
  return enc_fc_(x);
}

Vec WorldModel::encode(const Observation& obs) const {
  NoGradGuard ng;
  return encode(Var(Mat(obs.pixels))).value().col(0);
}

Var WorldModel::deterministic_step(const Var& h, const Var& s, const Var& a) const {
  return gru_(vcat(s, a), h);
}

DiagGaussianVar WorldModel::prior(const Var& h) const {
  Var out = prior_head_(h);
  return {rows(out, 0, cfg_.stoch_dim), std_from_raw(rows(out, cfg_.stoch_dim, cfg_.stoch_dim))};
}

DiagGaussianVar WorldModel::posterior(const Var& h, const Var& z) const {
  Var out = posterior_head_(vcat(h, z));
  return {rows(out, 0, cfg_.stoch_dim), std_from_raw(rows(out, cfg_.stoch_dim, cfg_.stoch_dim))};
}

DiagGaussianVar WorldModel::reward_head(const Var& h, const Var& s) const {
  Var mean = reward_head_(vcat(h, s));
  return {mean, Var(Mat::Ones(1, mean.cols()))};
}

DiagGaussianVar WorldModel::decode(const Var& h, const Var& s) const {
  Var x = dec_fc_(vcat(h, s));
  for (size_t i = 0; i < dec_convs_.size(); ++i) {
    x = dec_convs_[i](x);
    if (i + 1 < dec_convs_.size()) x = silu_(x);
  }
  return {x, Var(Mat::Ones(x.rows(), x.cols()))};
}

Var WorldModel::compatibility_logits(const Var& state_feat, const Var& z) const {
  Var s_proj = proj_state_(state_feat);          // (proj x N)
  Var z_proj = proj_obs_(z);                     // (proj x M)
  return matmul(transpose_(z_proj), matmul(bilinear_w_, s_proj));  // (M x N)
}

double WorldModel::compatibility(const RSSMState& state, const Vec& z) const {
  NoGradGuard ng;
  Vec feat(cfg_.feat_dim());
  feat << state.h, state.s;
  const double log_score =
      compatibility_logits(Var(Mat(feat)), Var(Mat(z))).item();
  return std::exp(log_score);
}

FilterResult WorldModel::filter_sequence(const SequenceBatch& batch, uint64_t seed) const {
  if (batch.seq_len < 1) throw std::invalid_argument("filter_sequence: empty batch");
  const int B = batch.batch, T = batch.seq_len;

  Rng rng(derive_seed(seed, "filter.noise"));
  const Mat noise = normal_matrix(cfg_.stoch_dim, static_cast<Eigen::Index>(B) * T, rng);

  FilterResult out;
  out.batch = B;
  out.seq_len = T;
  out.states.reserve(T);
  out.priors.reserve(T);
  out.posteriors.reserve(T);
  out.embeddings.reserve(T);

  Var h = Var(Mat::Zero(cfg_.deter_dim, B));
  Var s = Var(Mat::Zero(cfg_.stoch_dim, B));
  Var prev_a = Var(Mat::Zero(cfg_.action_dim, B));
  for (int t = 0; t < T; ++t) {
    if (t > 0) prev_a = Var(batch.actions.middleCols(static_cast<Eigen::Index>(t - 1) * B, B));
    h = deterministic_step(h, s, prev_a);
    Var z = encode(Var(batch.observations.middleCols(static_cast<Eigen::Index>(t) * B, B)));
    DiagGaussianVar post = posterior(h, z);
    s = post.rsample(noise.middleCols(static_cast<Eigen::Index>(t) * B, B));
    out.states.push_back({h, s});
    out.priors.push_back(prior(h));
    out.posteriors.push_back(std::move(post));
    out.embeddings.push_back(std::move(z));
  }
  return out;
}

RSSMState WorldModel::initial_state() const {
  return {Vec::Zero(cfg_.deter_dim), Vec::Zero(cfg_.stoch_dim)};
}

RSSMState WorldModel::filter_step(const RSSMState& prev, const Vec& prev_action,
                                  const Observation& obs, Rng& rng) const {
  NoGradGuard ng;
  Var h = deterministic_step(Var(Mat(prev.h)), Var(Mat(prev.s)), Var(Mat(prev_action)));
  Var z = encode(Var(Mat(obs.pixels)));
  DiagGaussianVar post = posterior(h, z);
  Vec eps(cfg_.stoch_dim);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  Vec s = post.mean.value().col(0) + post.stddev.value().col(0).cwiseProduct(eps);
  return {h.value().col(0), std::move(s)};
}

}  // namespace cvrl
