#include "cvrl/replay.hpp"

#include "cvrl/random.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cvrl {

double Episode::total_return() const {
  double r = 0.0;
  for (double x : rewards) r += x;
  return r;
}

ReplayBuffer::ReplayBuffer(size_t capacity_steps, int min_seq_len)
    : capacity_steps_(capacity_steps), min_seq_len_(min_seq_len) {
  if (min_seq_len_ < 2) throw std::invalid_argument("ReplayBuffer: min_seq_len must be >= 2");
  if (capacity_steps_ < static_cast<size_t>(min_seq_len_))
    throw std::invalid_argument("ReplayBuffer: capacity below one sequence");
}

void ReplayBuffer::append_episode(const Episode& episode) {
  const size_t len = episode.length();
  if (len < static_cast<size_t>(min_seq_len_))
    throw std::invalid_argument("ReplayBuffer: episode shorter than configured sequence length");
  if (episode.actions.size() != len || episode.rewards.size() != len)
    throw std::invalid_argument("ReplayBuffer: episode field lengths differ");

  Stored st;
  st.id = next_id_++;
  st.obs_c = episode.observations[0].channels;
  st.obs_h = episode.observations[0].height;
  st.obs_w = episode.observations[0].width;
  st.action_dim = static_cast<int>(episode.actions[0].size());
  const size_t obs_dim = episode.observations[0].pixels.size();
  st.obs.resize(len * obs_dim);
  st.actions.resize(len * st.action_dim);
  st.rewards.resize(len);
  for (size_t t = 0; t < len; ++t) {
    const auto& o = episode.observations[t];
    if (static_cast<size_t>(o.pixels.size()) != obs_dim)
      throw std::invalid_argument("ReplayBuffer: observation shape varies within episode");
    for (size_t i = 0; i < obs_dim; ++i) {
      const double v = o.pixels[static_cast<Eigen::Index>(i)];
      st.obs[t * obs_dim + i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    for (int a = 0; a < st.action_dim; ++a)
      st.actions[t * st.action_dim + a] = episode.actions[t][a];
    st.rewards[t] = episode.rewards[t];
  }

  episodes_.push_back(std::move(st));
  total_steps_ += len;
  while (total_steps_ > capacity_steps_ && episodes_.size() > 1) {
    total_steps_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

SequenceBatch ReplayBuffer::sample_batch(int B, int T, uint64_t seed) const {
  if (B < 1 || T < 2) throw std::invalid_argument("sample_batch: need B >= 1, T >= 2");
  if (episodes_.empty()) throw std::runtime_error("sample_batch: buffer is empty");

  // cumulative count of valid (episode, start) pairs
  std::vector<size_t> cum;
  cum.reserve(episodes_.size());
  size_t total = 0;
  for (const auto& e : episodes_) {
    if (e.length() >= static_cast<size_t>(T)) total += e.length() - T + 1;
    cum.push_back(total);
  }
  if (total == 0) throw std::runtime_error("sample_batch: no stored episode of length >= T");

  Rng rng(seed);
  SequenceBatch out;
  out.batch = B;
  out.seq_len = T;
  const auto& first = episodes_.front();
  const Eigen::Index obs_dim = static_cast<Eigen::Index>(first.obs_c) * first.obs_h * first.obs_w;
  out.observations.resize(obs_dim, static_cast<Eigen::Index>(B) * T);
  out.actions.resize(first.action_dim, static_cast<Eigen::Index>(B) * T);
  out.rewards.resize(1, static_cast<Eigen::Index>(B) * T);
  out.source.resize(static_cast<size_t>(B) * T);
  out.terminal.assign(static_cast<size_t>(B) * T, 0);

  for (int b = 0; b < B; ++b) {
    const size_t pick = rng.uniform_int(total);
    size_t ei = 0;
    while (cum[ei] <= pick) ++ei;
    const size_t before = ei == 0 ? 0 : cum[ei - 1];
    const size_t start = pick - before;
    const auto& ep = episodes_[ei];
    for (int t = 0; t < T; ++t) {
      const size_t step = start + t;
      const Eigen::Index c = out.col(b, t);
      for (Eigen::Index i = 0; i < obs_dim; ++i)
        out.observations(i, c) = static_cast<double>(ep.obs[step * obs_dim + i]) / 255.0;
      for (int a = 0; a < ep.action_dim; ++a)
        out.actions(a, c) = ep.actions[step * ep.action_dim + a];
      out.rewards(0, c) = ep.rewards[step];
      out.source[static_cast<size_t>(c)] = {ep.id, static_cast<int32_t>(step)};
      out.terminal[static_cast<size_t>(c)] = step + 1 == ep.length() ? 1 : 0;
    }
  }
  return out;
}

double ReplayBuffer::stored_reward(size_t episode_index, size_t step) const {
  return episodes_.at(episode_index).rewards.at(step);
}

int64_t ReplayBuffer::episode_id(size_t episode_index) const {
  return episodes_.at(episode_index).id;
}

size_t ReplayBuffer::episode_length(size_t episode_index) const {
  return episodes_.at(episode_index).length();
}

namespace {

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

// Layout (little endian):
//   magic "CVRLRPLY", u32 version=1, u64 n_episodes
//   per episode: i64 id, u32 len, u32 obs_c, u32 obs_h, u32 obs_w, u32 action_dim,
//                u8 obs[len*obs_dim], f64 actions[len*action_dim], f64 rewards[len]
void ReplayBuffer::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ReplayBuffer::save: cannot open " + path);
  f.write("CVRLRPLY", 8);
  write_pod(f, uint32_t{1});
  write_pod(f, static_cast<uint64_t>(episodes_.size()));
  for (const auto& e : episodes_) {
    write_pod(f, e.id);
    write_pod(f, static_cast<uint32_t>(e.length()));
    write_pod(f, static_cast<uint32_t>(e.obs_c));
    write_pod(f, static_cast<uint32_t>(e.obs_h));
    write_pod(f, static_cast<uint32_t>(e.obs_w));
    write_pod(f, static_cast<uint32_t>(e.action_dim));
    f.write(reinterpret_cast<const char*>(e.obs.data()), static_cast<std::streamsize>(e.obs.size()));
    f.write(reinterpret_cast<const char*>(e.actions.data()),
            static_cast<std::streamsize>(e.actions.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(e.rewards.data()),
            static_cast<std::streamsize>(e.rewards.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("ReplayBuffer::save: write failed for " + path);
}

void ReplayBuffer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ReplayBuffer::load: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, "CVRLRPLY", 8) != 0)
    throw std::runtime_error("ReplayBuffer::load: bad magic in " + path);
  uint32_t version = 0;
  read_pod(f, version);
  if (version != 1) throw std::runtime_error("ReplayBuffer::load: unsupported version");
  uint64_t n = 0;
  read_pod(f, n);
  episodes_.clear();
  total_steps_ = 0;
  for (uint64_t i = 0; i < n; ++i) {
    Stored e;
    uint32_t len = 0, c = 0, h = 0, w = 0, ad = 0;
    read_pod(f, e.id);
    read_pod(f, len);
    read_pod(f, c);
    read_pod(f, h);
    read_pod(f, w);
    read_pod(f, ad);
    e.obs_c = static_cast<int>(c);
    e.obs_h = static_cast<int>(h);
    e.obs_w = static_cast<int>(w);
    e.action_dim = static_cast<int>(ad);
    const size_t obs_dim = static_cast<size_t>(c) * h * w;
    e.obs.resize(len * obs_dim);
    e.actions.resize(len * ad);
    e.rewards.resize(len);
    f.read(reinterpret_cast<char*>(e.obs.data()), static_cast<std::streamsize>(e.obs.size()));
    f.read(reinterpret_cast<char*>(e.actions.data()),
           static_cast<std::streamsize>(e.actions.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(e.rewards.data()),
           static_cast<std::streamsize>(e.rewards.size() * sizeof(double)));
    if (!f) throw std::runtime_error("ReplayBuffer::load: truncated file " + path);
    total_steps_ += e.length();
    next_id_ = std::max(next_id_, e.id + 1);
    episodes_.push_back(std::move(e));
  }
}

}  // namespace cvrl
