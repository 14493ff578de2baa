#include "cvrl/config.hpp"

#include "cvrl/random.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>

namespace cvrl {

Variant variant_from_string(const std::string& s) {
  if (s == "cvrl") return Variant::cvrl;
  if (s == "generative") return Variant::generative;
  if (s == "no_mpc") return Variant::no_mpc;
  if (s == "no_sac") return Variant::no_sac;
  if (s == "reward_only") return Variant::reward_only;
  throw ConfigError("unknown variant: " + s +
                    " (expected cvrl|generative|no_mpc|no_sac|reward_only)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::cvrl: return "cvrl";
    case Variant::generative: return "generative";
    case Variant::no_mpc: return "no_mpc";
    case Variant::no_sac: return "no_sac";
    case Variant::reward_only: return "reward_only";
  }
  return "?";
}

namespace {

using FieldPtr = std::variant<int Config::*, int64_t Config::*, double Config::*, bool Config::*,
                              std::string Config::*>;

struct FieldDef {
  const char* name;
  FieldPtr ptr;
};

const std::vector<FieldDef>& field_table() {
  static const std::vector<FieldDef> table = {
      {"image_size", &Config::image_size},
      {"horizon", &Config::horizon},
      {"natural", &Config::natural},
      {"goal_radius", &Config::goal_radius},
      {"num_distractors", &Config::num_distractors},
      {"distractor_seed_policy", &Config::distractor_seed_policy},
      {"distractor_seed", &Config::distractor_seed},
      {"deter_dim", &Config::deter_dim},
      {"stoch_dim", &Config::stoch_dim},
      {"embed_dim", &Config::embed_dim},
      {"proj_dim", &Config::proj_dim},
      {"model_hidden", &Config::model_hidden},
      {"conv_depth", &Config::conv_depth},
      {"eps_sigma", &Config::eps_sigma},
      {"actor_hidden", &Config::actor_hidden},
      {"value_hidden", &Config::value_hidden},
      {"q_hidden", &Config::q_hidden},
      {"entropy_coef", &Config::entropy_coef},
      {"polyak_rho", &Config::polyak_rho},
      {"alpha", &Config::alpha},
      {"replay_capacity", &Config::replay_capacity},
      {"batch_size", &Config::batch_size},
      {"seq_len", &Config::seq_len},
      {"gamma", &Config::gamma},
      {"lambda", &Config::lambda},
      {"imagine_horizon", &Config::imagine_horizon},
      {"imagine_starts", &Config::imagine_starts},
      {"free_nats", &Config::free_nats},
      {"lr_model", &Config::lr_model},
      {"lr_value", &Config::lr_value},
      {"lr_actor", &Config::lr_actor},
      {"lr_sac", &Config::lr_sac},
      {"adam_eps", &Config::adam_eps},
      {"grad_clip", &Config::grad_clip},
      {"train_steps", &Config::train_steps},
      {"collect_interval", &Config::collect_interval},
      {"warmup_episodes", &Config::warmup_episodes},
      {"exploration_noise", &Config::exploration_noise},
      {"eval_interval", &Config::eval_interval},
      {"eval_episodes", &Config::eval_episodes},
      {"checkpoint_interval", &Config::checkpoint_interval},
      {"checkpoint_replay", &Config::checkpoint_replay},
      {"plan_horizon", &Config::plan_horizon},
      {"plan_iterations", &Config::plan_iterations},
      {"plan_step_size", &Config::plan_step_size},
      {"plan_backtracking", &Config::plan_backtracking},
      {"plan_max_halvings", &Config::plan_max_halvings},
      {"variant", &Config::variant},
      {"seed", &Config::seed},
  };
  return table;
}

const FieldDef& find_field(const std::string& key) {
  for (const auto& f : field_table())
    if (key == f.name) return f;
  throw ConfigError("unknown config key: " + key);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : field_table()) out.emplace_back(f.name);
    std::sort(out.begin(), out.end());
    return out;
  }();
  return names;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& field = find_field(key);
  try {
    std::visit(
        [&](auto ptr) {
          using M = std::remove_reference_t<decltype(this->*ptr)>;
          if constexpr (std::is_same_v<M, int>) {
            this->*ptr = std::stoi(value);
          } else if constexpr (std::is_same_v<M, int64_t>) {
            this->*ptr = std::stoll(value);
          } else if constexpr (std::is_same_v<M, double>) {
            this->*ptr = std::stod(value);
          } else if constexpr (std::is_same_v<M, bool>) {
            this->*ptr = parse_bool(value, key);
          } else {
            this->*ptr = value;
          }
        },
        field.ptr);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": cannot parse value '" + value + "'");
  }
}

std::string Config::get(const std::string& key) const {
  const auto& field = find_field(key);
  return std::visit(
      [&](auto ptr) -> std::string {
        using M = std::remove_cvref_t<decltype(this->*ptr)>;
        if constexpr (std::is_same_v<M, int> || std::is_same_v<M, int64_t>) {
          return std::to_string(this->*ptr);
        } else if constexpr (std::is_same_v<M, double>) {
          return format_double(this->*ptr);
        } else if constexpr (std::is_same_v<M, bool>) {
          return this->*ptr ? "true" : "false";
        } else {
          return this->*ptr;
        }
      },
      field.ptr);
}

void Config::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

Config Config::from_file(const std::string& path) {
  Config cfg;
  cfg.load_file(path);
  return cfg;
}

std::string Config::to_text() const {
  std::ostringstream out;
  for (const auto& key : keys()) out << key << " = " << get(key) << "\n";
  return out.str();
}

uint64_t Config::hash() const { return fnv1a64(to_text()); }

void Config::validate() const {
  variant_from_string(variant);
  if (distractor_seed_policy != "episode" && distractor_seed_policy != "fixed")
    throw ConfigError("distractor_seed_policy must be 'episode' or 'fixed'");
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(lr_model, "lr_model");
  positive(lr_value, "lr_value");
  positive(lr_actor, "lr_actor");
  positive(lr_sac, "lr_sac");
  positive(plan_step_size, "plan_step_size");
  positive(eps_sigma, "eps_sigma");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (free_nats < 0.0) throw ConfigError("free_nats must be >= 0");
  if (batch_size < 1 || seq_len < 2) throw ConfigError("need batch_size >= 1 and seq_len >= 2");
  if (seq_len > horizon) throw ConfigError("seq_len cannot exceed the episode horizon");
  if (imagine_horizon < 1 || plan_horizon < 1) throw ConfigError("horizons must be >= 1");
  if (train_steps < 0) throw ConfigError("train_steps must be >= 0");
  if (collect_interval < 1) throw ConfigError("collect_interval must be >= 1");
  if (image_size < 8 || (image_size & (image_size - 1)) != 0)
    throw ConfigError("image_size must be a power of two >= 8");
  if (exploration_noise < 0.0) throw ConfigError("exploration_noise must be >= 0");
}

WorldModelConfig Config::world_model_config() const {
  WorldModelConfig c;
  c.image_size = image_size;
  c.channels = 3;
  c.action_dim = 2;
  c.deter_dim = deter_dim;
  c.stoch_dim = stoch_dim;
  c.embed_dim = embed_dim;
  c.proj_dim = proj_dim;
  c.hidden = model_hidden;
  c.conv_depth = conv_depth;
  c.eps_sigma = eps_sigma;
  return c;
}

AgentConfig Config::agent_config() const {
  AgentConfig c;
  c.deter_dim = deter_dim;
  c.stoch_dim = stoch_dim;
  c.action_dim = 2;
  c.actor_hidden = actor_hidden;
  c.value_hidden = value_hidden;
  c.q_hidden = q_hidden;
  c.eps_sigma = eps_sigma;
  c.entropy_coef = entropy_coef;
  c.polyak_rho = polyak_rho;
  return c;
}

EnvConfig Config::env_config() const {
  EnvConfig c;
  c.image_size = image_size;
  c.horizon = horizon;
  c.goal_radius = goal_radius;
  c.natural = natural;
  c.num_distractors = num_distractors;
  c.distractor_seed_policy = distractor_seed_policy == "fixed"
                                 ? DistractorSeedPolicy::fixed
                                 : DistractorSeedPolicy::per_episode;
  c.distractor_seed = static_cast<uint64_t>(distractor_seed);
  return c;
}

PlannerConfig Config::planner_config() const {
  PlannerConfig c;
  c.horizon = plan_horizon;
  c.iterations = plan_iterations;
  c.step_size = plan_step_size;
  c.gamma = gamma;
  c.lambda = lambda;
  c.backtracking = plan_backtracking;
  c.max_halvings = plan_max_halvings;
  return c;
}

}  // namespace cvrl
