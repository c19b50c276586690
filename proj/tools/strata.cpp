// Command-line front end: train, eval, replay, fps-demo, grad-check.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "strata/config.hpp"
#include "strata/embed.hpp"
#include "strata/serialize.hpp"
#include "strata/trainer.hpp"

namespace {

int log_level() {
  static const int level = [] {
    const char* v = std::getenv("STRATA_LOG");
    if (!v) return 1;
    const std::string s = v;
    if (s == "error") return 0;
    if (s == "debug") return 2;
    return 1;  // info
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "%s\n", msg.c_str());
}
void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "%s\n", msg.c_str());
}

struct ConfigArgs {
  std::string config_path;
  std::string mode;
  std::string env;
  uint64_t seed = 0;
  bool seed_set = false;
};

// Loads the config file and applies command-line overrides. Returns false
// (after printing every problem) when the config cannot be used.
bool load_config(const ConfigArgs& args, strata::RunConfig& cfg) {
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) {
      std::fprintf(stderr, "config error: cannot open %s\n", args.config_path.c_str());
      return false;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    std::vector<std::string> errors;
    cfg = strata::parse_config(buf.str(), errors);
    if (!errors.empty()) {
      for (const std::string& e : errors)
        std::fprintf(stderr, "config error: %s\n", e.c_str());
      return false;
    }
  }
  if (!args.mode.empty()) cfg.mode = args.mode;
  if (!args.env.empty()) cfg.env = args.env;
  if (args.seed_set) cfg.seed = args.seed;
  const std::vector<std::string> errors = strata::validate_config(cfg);
  if (!errors.empty()) {
    for (const std::string& e : errors)
      std::fprintf(stderr, "config error: %s\n", e.c_str());
    return false;
  }
  return true;
}

int cmd_train(const ConfigArgs& cargs, const std::string& out_dir,
              bool dump_trajectories) {
  strata::RunConfig cfg;
  if (!load_config(cargs, cfg)) return 2;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::fprintf(stderr, "error: cannot create output directory %s: %s\n",
                 out_dir.c_str(), ec.message().c_str());
    return 1;
  }
  {
    std::ofstream cfg_out(out_dir + "/config.cfg", std::ios::trunc);
    cfg_out << strata::render_config(cfg);
  }

  strata::TrainOptions opts;
  opts.out_dir = out_dir;
  opts.dump_trajectories = dump_trajectories;
  opts.on_step = [&](const strata::MetricsRow& row) {
    log_info("step " + std::to_string(row.step) +
             " success=" + strata::format_double(row.success_rate) +
             " objective=" + strata::format_double(row.objective) +
             " kl=" + strata::format_double(row.kl));
  };

  const auto t0 = std::chrono::steady_clock::now();
  strata::TrainResult result;
  try {
    result = strata::train(cfg, opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    // wall time lives in a sidecar so metrics.jsonl stays bit-identical
    std::ofstream side(out_dir + "/run-info.txt", std::ios::trunc);
    side << "wall_seconds=" << strata::format_double(secs) << "\n";
  }
  if (result.aborted) {
    std::fprintf(stderr, "error: training aborted: %s\n", result.abort_reason.c_str());
    return 1;
  }
  const strata::MetricsRow& last = result.metrics.back();
  std::printf("trained %d steps: success_rate=%s mean_outcome=%s\n",
              int(result.metrics.size()),
              strata::format_double(last.success_rate).c_str(),
              strata::format_double(last.mean_outcome).c_str());
  std::printf("reward range [%s, %s], tokens strategy=%llu action=%llu judge=%llu\n",
              strata::format_double(result.reward_min).c_str(),
              strata::format_double(result.reward_max).c_str(),
              (unsigned long long)result.stats.strategy_tokens,
              (unsigned long long)result.stats.action_tokens,
              (unsigned long long)result.stats.judge_tokens);
  return 0;
}

int cmd_eval(const ConfigArgs& cargs, const std::string& checkpoint, int episodes,
             uint64_t eval_seed, bool eval_seed_set) {
  strata::RunConfig cfg;
  if (!load_config(cargs, cfg)) return 2;
  try {
    strata::PolicyParams params = strata::load_params(checkpoint);
    if (params.v != cfg.vocab_size() || params.d != cfg.d) {
      std::fprintf(stderr,
                   "error: checkpoint shape (v=%d, d=%d) does not match config "
                   "(v=%d, d=%d)\n",
                   params.v, params.d, cfg.vocab_size(), cfg.d);
      return 1;
    }
    params = params.as_role(strata::ParamRole::kCurrent);
    const strata::Environment env(cfg.env, cfg.horizon);
    const int n = episodes > 0 ? episodes : cfg.eval_episodes;
    const uint64_t root = eval_seed_set ? eval_seed : cfg.seed ^ 0x5eedull;
    const strata::EvalResult r = strata::evaluate(env, params, cfg, n, root);
    std::printf("{\"episodes\":%d,\"success_rate\":%s,\"mean_outcome\":%s}\n", n,
                strata::format_double(r.success_rate).c_str(),
                strata::format_double(r.mean_outcome).c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_replay(const std::string& dump_path) {
  try {
    const strata::BatchDump d = strata::read_dump(dump_path);
    const strata::Vocab& vocab = strata::Vocab::instance();
    std::printf("mode=%s task_seed=%llu trajectories=%d\n", d.mode.c_str(),
                (unsigned long long)d.task_seed, int(d.trajectories.size()));
    for (size_t i = 0; i < d.strategies.size(); ++i) {
      const strata::StrategySample& s = d.strategies[i];
      std::printf("strategy %d [%s] %s\n", int(i), s.parse_ok ? "ok" : "unparsed",
                  s.parse_ok ? vocab.detokenize(s.strategy.body).c_str()
                             : vocab.detokenize(s.raw).c_str());
      if (i < d.strategy_rewards.size())
        std::printf("  reward=%s advantage=%s\n",
                    strata::format_double(d.strategy_rewards[i]).c_str(),
                    strata::format_double(d.strategy_advantages[i]).c_str());
    }
    for (size_t t = 0; t < d.trajectories.size(); ++t) {
      const strata::Trajectory& traj = d.trajectories[t];
      std::printf("trajectory %d: steps=%d success=%s outcome=%s\n", int(t),
                  int(traj.steps.size()), traj.terminated ? "yes" : "no",
                  strata::format_double(traj.outcome_reward).c_str());
      for (const strata::StepRecord& step : traj.steps) {
        std::printf("  t=%d obs: %s\n", step.step_index, step.state_text.c_str());
        std::printf("  t=%d act: %s%s\n", step.step_index,
                    vocab.detokenize(step.action).c_str(),
                    step.parse_ok ? "" : " (malformed)");
      }
    }
    std::printf("reward records: %d\n", int(d.reward_records.size()));
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_fps_demo(int candidates, int select, uint64_t seed) {
  if (candidates < select || select < 1) {
    std::fprintf(stderr, "error: need candidates >= select >= 1\n");
    return 2;
  }
  const strata::Vocab& vocab = strata::Vocab::instance();
  strata::Rng rng = strata::derive_stream(seed, {77});
  std::vector<std::vector<strata::TokenId>> bodies;
  std::vector<std::vector<double>> emb;
  for (int c = 0; c < candidates; ++c) {
    std::vector<strata::TokenId> body;
    const int len = 3 + int(rng.next_below(4));
    for (int i = 0; i < len; ++i) {
      // skip id 0 so bodies never contain the end-of-sequence token
      body.push_back(strata::TokenId(1 + rng.next_below(uint64_t(vocab.size() - 1))));
    }
    emb.push_back(strata::embed_strategy(body, 64));
    bodies.push_back(std::move(body));
  }
  const std::vector<size_t> sel = strata::fps_select(emb, size_t(select));

  auto min_pairwise = [&](const std::vector<size_t>& idx) {
    double best = 2.0;
    for (size_t a = 0; a < idx.size(); ++a)
      for (size_t b = a + 1; b < idx.size(); ++b) {
        double dot = 0.0;
        for (size_t k = 0; k < emb[idx[a]].size(); ++k)
          dot += emb[idx[a]][k] * emb[idx[b]][k];
        best = std::min(best, 1.0 - dot);
      }
    return best;  // min pairwise cosine distance
  };
  std::vector<size_t> first;
  for (int i = 0; i < select; ++i) first.push_back(size_t(i));

  std::printf("candidates=%d select=%d\n", candidates, select);
  for (size_t s : sel) {
    strata::TokenSeq seq;
    seq.tokens = bodies[s];
    std::printf("picked %d: %s\n", int(s), vocab.detokenize(seq).c_str());
  }
  std::printf("min pairwise distance: selected=%s first-%d=%s\n",
              strata::format_double(min_pairwise(sel)).c_str(), select,
              strata::format_double(min_pairwise(first)).c_str());
  return 0;
}

int cmd_grad_check(int trials, uint64_t seed) {
  try {
    const strata::GradCheckResult r = strata::grad_check(trials, seed);
    std::printf("trials=%d coords=%d max_rel_err=%s\n", r.trials, r.coords_checked,
                strata::format_double(r.max_rel_err).c_str());
    if (r.max_rel_err < 1e-4) return 0;
    std::fprintf(stderr, "error: gradient mismatch above tolerance\n");
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strategy-guided group RL trainer for toy text environments"};
  app.require_subcommand(1);

  ConfigArgs cargs;
  std::string out_dir = "out";
  bool dump_trajectories = false;
  std::string checkpoint, dump_path;
  int episodes = 0;
  uint64_t eval_seed = 0;
  bool eval_seed_set = false;
  int candidates = 32, select = 4, trials = 4;
  uint64_t demo_seed = 1;

  CLI::App* train = app.add_subcommand("train", "train a policy");
  train->add_option("--config", cargs.config_path, "config file")->required();
  train->add_option("--seed", cargs.seed, "override [trainer] seed")
      ->each([&](const std::string&) { cargs.seed_set = true; });
  train->add_option("--mode", cargs.mode, "override mode (strata | flat-grpo)");
  train->add_option("--env", cargs.env, "override environment");
  train->add_option("--out", out_dir, "output directory");
  train->add_flag("--dump-trajectories", dump_trajectories,
                  "write one rollout dump per training step");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", cargs.config_path, "config file")->required();
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  eval->add_option("--episodes", episodes, "episode count (default: config)");
  eval->add_option("--eval-seed", eval_seed, "evaluation stream seed")
      ->each([&](const std::string&) { eval_seed_set = true; });
  eval->add_option("--mode", cargs.mode, "override mode");
  eval->add_option("--env", cargs.env, "override environment");

  CLI::App* replay = app.add_subcommand("replay", "print a rollout dump");
  replay->add_option("--dump", dump_path, "dump file")->required();

  CLI::App* fps = app.add_subcommand("fps-demo", "show diverse strategy selection");
  fps->add_option("--candidates", candidates, "candidate pool size");
  fps->add_option("--select", select, "how many to keep");
  fps->add_option("--seed", demo_seed, "demo seed");

  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
  gc->add_option("--trials", trials, "number of random batches");
  gc->add_option("--seed", demo_seed, "check seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  log_debug("log level: debug");
  if (train->parsed()) return cmd_train(cargs, out_dir, dump_trajectories);
  if (eval->parsed()) return cmd_eval(cargs, checkpoint, episodes, eval_seed, eval_seed_set);
  if (replay->parsed()) return cmd_replay(dump_path);
  if (fps->parsed()) return cmd_fps_demo(candidates, select, demo_seed);
  if (gc->parsed()) return cmd_grad_check(trials, demo_seed);
  return 2;
}
