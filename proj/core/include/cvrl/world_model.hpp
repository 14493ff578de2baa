#pragma once

#include "cvrl/distributions.hpp"
#include "cvrl/env.hpp"
#include "cvrl/nn.hpp"
#include "cvrl/replay.hpp"

#include <vector>

namespace cvrl {

// Latent state: deterministic memory h plus stochastic latent s.
struct RSSMState {
  Vec h;
  Vec s;
};

// Batched graph counterpart, one state per column.
struct RSSMStateVar {
  Var h;
  Var s;
  Var feat() const { return vcat(h, s); }
};

struct WorldModelConfig {
  int image_size = 32;
  int channels = 3;
  int action_dim = 2;
  int deter_dim = 64;   // h
  int stoch_dim = 16;   // s
  int embed_dim = 128;  // observation embedding z
  int proj_dim = 64;    // compatibility projection
  int hidden = 128;
  int conv_depth = 8;   // channels double per level: depth, 2*depth, ...
  double eps_sigma = 1e-4;

  int conv_levels() const;
  Eigen::Index obs_dim() const {
    return static_cast<Eigen::Index>(channels) * image_size * image_size;
  }
  Eigen::Index feat_dim() const { return deter_dim + stoch_dim; }
};

struct FilterResult {
  std::vector<RSSMStateVar> states;          // T entries, (dim x B) each
  std::vector<DiagGaussianVar> priors;       // T
  std::vector<DiagGaussianVar> posteriors;   // T
  std::vector<Var> embeddings;               // T, (embed x B)
  int batch = 0;
  int seq_len = 0;

  // all T steps side by side, columns ordered t*B + b (contrastive pool order)
  Var pooled_feat() const;
  Var pooled_embed() const;
};

// RSSM world model: conv encoder, GRU deterministic core, prior/posterior
// heads, reward head, generative decoder (baseline) and the bilinear
// compatibility head for contrastive learning. All heads are pure functions
// of (params, inputs).
class WorldModel {
 public:
  WorldModel(const WorldModelConfig& cfg, uint64_t seed);

  const WorldModelConfig& config() const { return cfg_; }
  const ParamRegistry& registry() const { return reg_; }
  const std::vector<Var>& params() const { return reg_.params(); }

  // parameter subsets used by ablation checks
  std::vector<Var> decoder_params() const;
  std::vector<Var> compat_params() const;

  // (C*H*W x N) -> (embed x N); throws on shape mismatch
  Var encode(const Var& obs) const;
  Vec encode(const Observation& obs) const;

  // GRU update h' = f(h, [s; a])
  Var deterministic_step(const Var& h, const Var& s, const Var& a) const;

  DiagGaussianVar prior(const Var& h) const;
  DiagGaussianVar posterior(const Var& h, const Var& z) const;

  // scalar mean per column, stddev fixed at 1
  DiagGaussianVar reward_head(const Var& h, const Var& s) const;

  // per-pixel mean, stddev fixed at 1 (generative baseline)
  DiagGaussianVar decode(const Var& h, const Var& s) const;

  // log f(s, o) = z_proj^T W s_proj; (i, j) scores embedding i against state j
  Var compatibility_logits(const Var& state_feat, const Var& z) const;

  // strictly positive compatibility for a single pair
  double compatibility(const RSSMState& state, const Vec& z) const;

  // Posterior rollout over a sequence batch from zero initial state, with
  // reparameterized sampling driven by `seed`. The first step uses a zero
  // previous action; afterwards step t consumes the batch action at t-1.
  FilterResult filter_sequence(const SequenceBatch& batch, uint64_t seed) const;

  // single-step online filtering used during environment interaction
  RSSMState initial_state() const;
  RSSMState filter_step(const RSSMState& prev, const Vec& prev_action, const Observation& obs,
                        Rng& rng) const;

  // stddev map shared by every stochastic head
  Var std_from_raw(const Var& raw) const { return softplus_(raw) + cfg_.eps_sigma; }

 private:
  WorldModelConfig cfg_;
  ParamRegistry reg_;

  std::vector<Conv2dLayer> enc_convs_;
  Linear enc_fc_;
  GRUCell gru_;
  MLP prior_head_;
  MLP posterior_head_;
  MLP reward_head_;
  Linear dec_fc_;
  std::vector<ConvT2dLayer> dec_convs_;
  Linear proj_obs_;
  Linear proj_state_;
  Var bilinear_w_;
};

}  // namespace cvrl
