#pragma once

#include "cvrl/objectives.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

namespace cvrl {

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  int episodes = 0;
};

// One training-step record of the metrics stream.
struct MetricsRecord {
  int64_t step = 0;
  int64_t env_steps = 0;
  bool ok = true;
  std::string error;

  LossBreakdown model;
  double dreamer_actor = 0.0;
  double sac_actor = 0.0;
  double actor_loss = 0.0;  // hybrid objective
  double critic_loss = 0.0;
  double q_loss = 0.0;

  std::optional<double> collect_return;
  std::optional<double> plan_value_delta;  // mean value_after - value_before
  std::optional<EvalStats> eval;

  double wall_clock = 0.0;  // seconds since run start; excluded from
                            // determinism comparisons
};

// single JSON object, no trailing newline
std::string to_json_line(const MetricsRecord& r);

// Append-only JSONL sink, flushed per record.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  void open(const std::string& path, bool append);
  bool is_open() const { return file_.is_open(); }
  void write(const MetricsRecord& r);

 private:
  std::ofstream file_;
};

}  // namespace cvrl
