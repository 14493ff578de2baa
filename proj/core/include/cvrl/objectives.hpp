#pragma once

#include "cvrl/distributions.hpp"
#include "cvrl/world_model.hpp"

namespace cvrl {

// Batch-mean scalar parts of a representation loss. `observation` holds the
// contrastive term under CELBO and the reconstruction term under the
// generative ELBO; total = -(observation + reward_ll - kl).
struct LossBreakdown {
  double total = 0.0;
  double observation = 0.0;
  double reward_ll = 0.0;
  double kl = 0.0;  // free-nats-clipped contribution
};

enum class ModelObjective { celbo, elbo, reward_only };

struct ModelLossResult {
  Var total;  // 1x1, minimized
  LossBreakdown parts;
  FilterResult filter;
};

// InfoNCE value (to be maximized) over a numeric score matrix with one row
// per anchor: column 0 is the positive log-score, columns 1..K the
// negatives. The positive is included in the log-sum-exp denominator.
double info_nce(const Mat& log_scores);

// Same bound over a square logit matrix with positives on the diagonal;
// anchors are columns. Returns a 1x1 graph value (to be maximized).
Var info_nce_square(const Var& logits);

// Evidence-style losses over a sequence batch. `seed` drives the
// reparameterized posterior samples, so two objectives evaluated with the
// same seed share identical states, KL and reward terms.
ModelLossResult model_loss(const WorldModel& wm, const SequenceBatch& batch, uint64_t seed,
                           ModelObjective objective, double free_nats);

ModelLossResult elbo_loss(const WorldModel& wm, const SequenceBatch& batch, uint64_t seed,
                          double free_nats = 1.0);
ModelLossResult celbo_loss(const WorldModel& wm, const SequenceBatch& batch, uint64_t seed,
                           double free_nats = 1.0);

}  // namespace cvrl
