#include "cvrl/metrics.hpp"

#include "cvrl/errors.hpp"

#include <json.hpp>

namespace cvrl {

std::string to_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["env_steps"] = r.env_steps;
  j["ok"] = r.ok;
  if (!r.ok) j["error"] = r.error;
  j["loss"] = {{"total", r.model.total},
               {"observation", r.model.observation},
               {"reward_ll", r.model.reward_ll},
               {"kl", r.model.kl}};
  j["dreamer_actor"] = r.dreamer_actor;
  j["sac_actor"] = r.sac_actor;
  j["actor_loss"] = r.actor_loss;
  j["critic_loss"] = r.critic_loss;
  j["q_loss"] = r.q_loss;
  if (r.collect_return) j["collect_return"] = *r.collect_return;
  if (r.plan_value_delta) j["plan_value_delta"] = *r.plan_value_delta;
  if (r.eval) {
    j["eval"] = {{"mean", r.eval->mean},
                 {"stddev", r.eval->stddev},
                 {"min", r.eval->min},
                 {"max", r.eval->max},
                 {"episodes", r.eval->episodes}};
  }
  j["wall_clock"] = r.wall_clock;
  return j.dump();
}

void MetricsWriter::open(const std::string& path, bool append) {
  file_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!file_) throw OutputError("cannot open metrics file: " + path);
}

void MetricsWriter::write(const MetricsRecord& r) {
  file_ << to_json_line(r) << '\n';
  file_.flush();
}

}  // namespace cvrl
