#include "cvrl/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

double info_nce(const Mat& log_scores) {
  if (log_scores.cols() < 2)
    throw std::invalid_argument("info_nce: need at least one negative per anchor");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < log_scores.rows(); ++i) {
    const double m = log_scores.row(i).maxCoeff();
    const double lse = m + std::log((log_scores.row(i).array() - m).exp().sum());
    acc += log_scores(i, 0) - lse;
  }
  return acc / static_cast<double>(log_scores.rows());
}

Var info_nce_square(const Var& logits) {
  if (logits.rows() != logits.cols())
    throw std::invalid_argument("info_nce_square: logits must be square");
  Var per_anchor = diag_as_row(logits) - logsumexp_rows(logits);
  return mean_all(per_anchor);
}

ModelLossResult model_loss(const WorldModel& wm, const SequenceBatch& batch, uint64_t seed,
                           ModelObjective objective, double free_nats) {
  ModelLossResult out;
  out.filter = wm.filter_sequence(batch, seed);
  const int B = batch.batch, T = batch.seq_len;

  // dynamics: free-nats-clipped KL(posterior || prior), batch mean
  std::vector<Var> kl_steps;
  kl_steps.reserve(T);
  for (int t = 0; t < T; ++t)
    kl_steps.push_back(gaussian_kl(out.filter.posteriors[t], out.filter.priors[t]));
  Var kl_pool = hcat(kl_steps);  // (1 x B*T)
  Var kl_term = free_nats > 0.0 ? mean_all(relu_(kl_pool - free_nats)) : mean_all(kl_pool);

  // reward likelihood under the unit-variance head
  std::vector<Var> rew_steps;
  rew_steps.reserve(T);
  for (int t = 0; t < T; ++t) {
    const auto& st = out.filter.states[t];
    DiagGaussianVar head = wm.reward_head(st.h, st.s);
    Var target(Mat(batch.rewards.middleCols(static_cast<Eigen::Index>(t) * B, B)));
    rew_steps.push_back(head.log_prob(target));
  }
  Var reward_term = mean_all(hcat(rew_steps));

  Var obs_term;
  switch (objective) {
    case ModelObjective::celbo: {
      // negatives for every anchor are the other B*T - 1 batch observations
      Var logits = wm.compatibility_logits(out.filter.pooled_feat(), out.filter.pooled_embed());
      obs_term = info_nce_square(logits);
      break;
    }
    case ModelObjective::elbo: {
      std::vector<Var> rec_steps;
      rec_steps.reserve(T);
      for (int t = 0; t < T; ++t) {
        const auto& st = out.filter.states[t];
        DiagGaussianVar dec = wm.decode(st.h, st.s);
        Var target(Mat(batch.observations.middleCols(static_cast<Eigen::Index>(t) * B, B)));
        rec_steps.push_back(dec.log_prob(target));
      }
      obs_term = mean_all(hcat(rec_steps));
      break;
    }
    case ModelObjective::reward_only:
      obs_term = Var::scalar(0.0);
      break;
  }

  out.total = kl_term - obs_term - reward_term;
  out.parts.total = out.total.item();
  out.parts.observation = obs_term.item();
  out.parts.reward_ll = reward_term.item();
  out.parts.kl = kl_term.item();
  return out;
}

ModelLossResult elbo_loss(const WorldModel& wm, const SequenceBatch& batch, uint64_t seed,
                          double free_nats) {
  return model_loss(wm, batch, seed, ModelObjective::elbo, free_nats);
}

ModelLossResult celbo_loss(const WorldModel& wm, const SequenceBatch& batch, uint64_t seed,
                           double free_nats) {
  return model_loss(wm, batch, seed, ModelObjective::celbo, free_nats);
}

}  // namespace cvrl
