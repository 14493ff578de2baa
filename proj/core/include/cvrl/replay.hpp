#pragma once

#include "cvrl/env.hpp"
#include "cvrl/tensor.hpp"

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace cvrl {

// One full episode. Index t holds the observation seen at step t together
// with the action applied and the reward received at that step.
struct Episode {
  std::vector<Observation> observations;
  std::vector<Eigen::VectorXd> actions;
  std::vector<double> rewards;

  size_t length() const { return observations.size(); }
  double total_return() const;
};

// B sequences of length T, flattened column-major: column index = t*B + b.
// The B*T observations of a batch form the contrastive pool: for each anchor
// the other B*T - 1 observations act as negatives.
struct SequenceBatch {
  int batch = 0;
  int seq_len = 0;
  Mat observations;  // (obs_dim x B*T)
  Mat actions;       // (action_dim x B*T)
  Mat rewards;       // (1 x B*T)
  std::vector<std::pair<int64_t, int32_t>> source;  // (episode id, step id) per column
  std::vector<uint8_t> terminal;                    // 1 iff the step ended its episode

  Eigen::Index col(int b, int t) const { return static_cast<Eigen::Index>(t) * batch + b; }
  Eigen::Index pool_size() const { return static_cast<Eigen::Index>(batch) * seq_len; }
};

// Whole-episode storage with contiguous-slice sampling. Pixels are stored as
// 8-bit levels (k/255); env observations are already quantized to that grid
// so storage is lossless for them. Single-writer/single-reader contract:
// appends and reads must not run concurrently.
class ReplayBuffer {
 public:
  // capacity is in total steps; min_seq_len is the sampling length T that
  // appended episodes must be able to serve.
  ReplayBuffer(size_t capacity_steps, int min_seq_len);

  // Rejects episodes shorter than min_seq_len or with mismatched field
  // lengths. Evicts oldest whole episodes when over capacity.
  void append_episode(const Episode& episode);

  // B contiguous sequences drawn uniformly over (episode, valid start)
  // pairs; deterministic given (seed, buffer contents).
  SequenceBatch sample_batch(int B, int T, uint64_t seed) const;

  size_t total_steps() const { return total_steps_; }
  size_t num_episodes() const { return episodes_.size(); }
  int min_seq_len() const { return min_seq_len_; }

  // documented flat binary layout, see save() implementation
  void save(const std::string& path) const;
  void load(const std::string& path);

  // test access
  double stored_reward(size_t episode_index, size_t step) const;
  int64_t episode_id(size_t episode_index) const;
  size_t episode_length(size_t episode_index) const;

 private:
  struct Stored {
    int64_t id = 0;
    int obs_c = 0, obs_h = 0, obs_w = 0;
    int action_dim = 0;
    std::vector<uint8_t> obs;  // len * obs_dim
    std::vector<double> actions;
    std::vector<double> rewards;
    size_t length() const { return rewards.size(); }
  };

  size_t capacity_steps_;
  int min_seq_len_;
  size_t total_steps_ = 0;
  int64_t next_id_ = 0;
  std::deque<Stored> episodes_;
};

}  // namespace cvrl
