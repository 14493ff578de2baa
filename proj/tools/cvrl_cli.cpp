#include "cvrl/checkpoint.hpp"
#include "cvrl/trainer.hpp"

#include "plot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitOutput = 3;
constexpr int kExitCheckpoint = 4;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = "runs/default";
  int64_t seed = -1;
  std::string variant;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_out = true) {
  cmd->add_option("--config", opts.config_path, "flat key = value config file");
  cmd->add_option("--set", opts.sets, "override a config key, e.g. --set train_steps=100")
      ->take_all();
  if (with_out) cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--seed", opts.seed, "run seed (overrides the config)");
  cmd->add_option("--variant", opts.variant,
                  "cvrl | generative | no_mpc | no_sac | reward_only");
}

void apply_overrides(cvrl::Config& cfg, const CommonOpts& opts) {
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw cvrl::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.variant.empty()) cfg.set("variant", opts.variant);
  if (opts.seed >= 0) cfg.set("seed", std::to_string(opts.seed));
}

cvrl::Config build_config(const CommonOpts& opts) {
  cvrl::Config cfg;
  if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
  apply_overrides(cfg, opts);
  cfg.validate();
  return cfg;
}

json eval_to_json(const cvrl::EvalStats& stats) {
  return json{{"mean", stats.mean},
              {"stddev", stats.stddev},
              {"min", stats.min},
              {"max", stats.max},
              {"episodes", stats.episodes}};
}

std::optional<cvrl::EvalStats> last_eval(const std::string& metrics_path) {
  std::ifstream f(metrics_path);
  if (!f) return std::nullopt;
  std::optional<cvrl::EvalStats> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("eval")) continue;
    cvrl::EvalStats stats;
    stats.mean = j["eval"]["mean"].get<double>();
    stats.stddev = j["eval"]["stddev"].get<double>();
    stats.min = j["eval"]["min"].get<double>();
    stats.max = j["eval"]["max"].get<double>();
    stats.episodes = j["eval"]["episodes"].get<int>();
    out = stats;
  }
  return out;
}

int run_train(const CommonOpts& opts, bool resume) {
  cvrl::Config cfg = build_config(opts);
  cvrl::Trainer trainer(cfg);
  trainer.run(opts.out, resume);
  std::cout << "run complete: " << opts.out << "\n";
  return kExitOk;
}

int run_eval(const CommonOpts& opts, const std::string& checkpoint, int episodes, bool random,
             const std::string& stats_out) {
  cvrl::Config cfg;
  if (!random) {
    cvrl::Checkpoint ck = cvrl::Checkpoint::load(checkpoint);
    json meta = json::parse(ck.metadata());
    std::istringstream text(meta["config"].get<std::string>());
    std::string line;
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(text, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
  apply_overrides(cfg, opts);
  cfg.validate();

  cvrl::Trainer trainer(cfg);
  if (!random) trainer.load_checkpoint(checkpoint);
  cvrl::EvalStats stats =
      trainer.evaluate(episodes, cvrl::derive_seed(static_cast<uint64_t>(cfg.seed), "cli.eval"));
  json out = eval_to_json(stats);
  out["variant"] = cfg.variant;
  out["seed"] = cfg.seed;
  out["random_policy"] = random;
  std::cout << out.dump(2) << "\n";
  if (!stats_out.empty()) {
    std::ofstream f(stats_out);
    if (!f) throw cvrl::OutputError("cannot write stats file: " + stats_out);
    f << out.dump(2) << "\n";
  }
  return kExitOk;
}

std::string self_exe() {
  char buf[4096];
  const ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) throw std::runtime_error("cannot resolve /proc/self/exe");
  buf[n] = '\0';
  return buf;
}

pid_t spawn_train(const std::string& exe, const std::string& config_path,
                  const std::string& out_dir, const std::string& variant, int64_t seed) {
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    std::string seed_str = std::to_string(seed);
    std::vector<std::string> args = {exe,     "train", "--config", config_path, "--out",
                                     out_dir, "--variant", variant, "--seed",   seed_str};
    std::vector<char*> argv;
    argv.reserve(args.size() + 1);
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    execv(exe.c_str(), argv.data());
    std::perror("execv");
    _exit(127);
  }
  return pid;
}

int run_ablate(const CommonOpts& opts, const std::string& variants_csv,
               const std::string& seeds_csv, int jobs) {
  std::vector<std::string> variants;
  {
    std::istringstream ss(variants_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      cvrl::variant_from_string(item);  // validates
      variants.push_back(item);
    }
  }
  std::vector<int64_t> seeds;
  {
    std::istringstream ss(seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoll(item));
  }
  if (variants.empty() || seeds.empty())
    throw cvrl::ConfigError("ablate: need at least one variant and one seed");

  cvrl::Config base = build_config(opts);
  std::error_code ec;
  fs::create_directories(opts.out, ec);
  if (ec) throw cvrl::OutputError("cannot create output directory: " + opts.out);
  const std::string base_cfg_path = opts.out + "/base.cfg";
  {
    std::ofstream f(base_cfg_path);
    if (!f) throw cvrl::OutputError("output directory is not writable: " + opts.out);
    f << base.to_text();
  }

  struct Job {
    std::string variant;
    int64_t seed;
    std::string dir;
  };
  std::vector<Job> todo;
  for (const auto& v : variants)
    for (int64_t s : seeds)
      todo.push_back({v, s, opts.out + "/" + v + "-seed" + std::to_string(s)});

  const std::string exe = self_exe();
  std::map<pid_t, Job> running;
  size_t next = 0;
  bool failed = false;
  while (next < todo.size() || !running.empty()) {
    while (next < todo.size() && static_cast<int>(running.size()) < std::max(1, jobs)) {
      const Job& job = todo[next];
      running.emplace(spawn_train(exe, base_cfg_path, job.dir, job.variant, job.seed), job);
      ++next;
    }
    int status = 0;
    const pid_t done = waitpid(-1, &status, 0);
    if (done < 0) break;
    const auto it = running.find(done);
    if (it == running.end()) continue;
    const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    std::cout << (ok ? "finished " : "FAILED ") << it->second.dir << std::endl;
    if (!ok) failed = true;
    running.erase(it);
  }
  if (failed) throw std::runtime_error("one or more ablation runs failed");

  // summary table: rows = tasks, columns = variants
  const std::string task = base.natural ? "toy-pointmass-natural" : "toy-pointmass-standard";
  std::ofstream csv(opts.out + "/summary.csv");
  if (!csv) throw cvrl::OutputError("cannot write summary.csv under " + opts.out);
  csv << "# final evaluation return, mean+-std over seeds {" << seeds_csv << "}\n";
  csv << "# toy pixel point-mass environments; absolute values are not comparable to "
         "full-scale control-suite scores\n";
  csv << "task";
  for (const auto& v : variants) csv << "," << v;
  csv << "\n" << task;
  for (const auto& v : variants) {
    std::vector<double> finals;
    for (int64_t s : seeds) {
      const std::string dir = opts.out + "/" + v + "-seed" + std::to_string(s);
      auto stats = last_eval(dir + "/metrics.jsonl");
      if (!stats) throw std::runtime_error("missing final evaluation in " + dir);
      finals.push_back(stats->mean);
    }
    double mean = 0.0;
    for (double x : finals) mean += x;
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double x : finals) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(finals.size()));
    char cell[64];
    std::snprintf(cell, sizeof(cell), "%.2f+-%.2f", mean, sd);
    csv << "," << cell;
  }
  csv << "\n";
  std::cout << "summary written: " << opts.out << "/summary.csv\n";
  return kExitOk;
}

int run_plot(const std::string& out_dir, const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw cvrl::ConfigError("plot: no run directories given");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw cvrl::OutputError("cannot create output directory: " + out_dir);

  // group runs by variant, read from each run's config snapshot
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& dir : run_dirs) {
    std::string variant = "unknown";
    std::ifstream cfg(dir + "/config.cfg");
    std::string line;
    while (std::getline(cfg, line)) {
      if (line.rfind("variant", 0) == 0) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
          variant = line.substr(eq + 1);
          const auto b = variant.find_first_not_of(" \t");
          variant = b == std::string::npos ? variant : variant.substr(b);
        }
      }
    }
    groups[variant].push_back(dir);
  }

  std::vector<cvrl::tools::Series> series;
  std::vector<cvrl::tools::Bar> bars;
  for (const auto& [variant, dirs] : groups) {
    std::map<int64_t, std::vector<double>> by_step;
    std::vector<double> finals;
    for (const auto& dir : dirs) {
      std::ifstream f(dir + "/metrics.jsonl");
      if (!f) throw cvrl::ConfigError("no metrics.jsonl in " + dir);
      std::string line;
      double last = 0.0;
      bool any = false;
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("eval")) continue;
        const double mean = j["eval"]["mean"].get<double>();
        by_step[j["step"].get<int64_t>()].push_back(mean);
        last = mean;
        any = true;
      }
      if (any) finals.push_back(last);
    }
    cvrl::tools::Series s;
    s.label = variant;
    for (const auto& [step, values] : by_step) {
      double mean = 0.0, lo = values[0], hi = values[0];
      for (double v : values) {
        mean += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      mean /= static_cast<double>(values.size());
      s.x.push_back(static_cast<double>(step));
      s.mean.push_back(mean);
      s.lo.push_back(lo);
      s.hi.push_back(hi);
    }
    if (!s.x.empty()) series.push_back(std::move(s));

    if (!finals.empty()) {
      cvrl::tools::Bar bar;
      bar.label = variant;
      double mean = 0.0, lo = finals[0], hi = finals[0];
      for (double v : finals) {
        mean += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      bar.value = mean / static_cast<double>(finals.size());
      bar.lo = lo;
      bar.hi = hi;
      bars.push_back(std::move(bar));
    }
  }

  cvrl::tools::write_line_chart(out_dir + "/learning_curves.png",
                                "evaluation return vs train step", series);
  cvrl::tools::write_bar_chart(out_dir + "/ablation_bars.png", "final evaluation return", bars);
  std::cout << "plots written under " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive variational RL on toy pixel point-mass environments"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  bool resume = false;
  CLI::App* train_cmd = app.add_subcommand("train", "train one variant");
  add_common(train_cmd, train_opts);
  train_cmd->add_flag("--resume", resume, "continue from the latest checkpoint in --out");

  CommonOpts eval_opts;
  std::string checkpoint;
  std::string stats_out;
  int episodes = 10;
  bool random_policy = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_opts, /*with_out=*/false);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file to evaluate");
  eval_cmd->add_option("--episodes", episodes, "number of evaluation episodes");
  eval_cmd->add_option("--stats-out", stats_out, "write the statistics JSON here");
  eval_cmd->add_flag("--random", random_policy,
                     "evaluate freshly initialized (untrained) parameters");

  CommonOpts ablate_opts;
  std::string variants_csv = "cvrl,generative,no_mpc,no_sac,reward_only";
  std::string seeds_csv = "0,1";
  int jobs = 1;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run a variant x seed sweep");
  add_common(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("--variants", variants_csv, "comma-separated variant list");
  ablate_cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
  ablate_cmd->add_option("--jobs", jobs, "concurrent training processes");

  std::string plot_out = "plots";
  std::vector<std::string> plot_runs;
  CLI::App* plot_cmd = app.add_subcommand("plot", "render learning curves and ablation bars");
  plot_cmd->add_option("--out", plot_out, "output directory for images and CSVs");
  plot_cmd->add_option("runs", plot_runs, "run directories (own metrics.jsonl + config.cfg)");

  try {
    app.parse(argc, argv);
    if (*train_cmd) return run_train(train_opts, resume);
    if (*eval_cmd) {
      if (!random_policy && checkpoint.empty())
        throw cvrl::CheckpointError("eval: --checkpoint is required (or pass --random)");
      return run_eval(eval_opts, checkpoint, episodes, random_policy, stats_out);
    }
    if (*ablate_cmd) return run_ablate(ablate_opts, variants_csv, seeds_csv, jobs);
    if (*plot_cmd) return run_plot(plot_out, plot_runs);
    return kExitOther;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  } catch (const cvrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cvrl::OutputError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return kExitOutput;
  } catch (const cvrl::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}
