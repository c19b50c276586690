#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/config.hpp"
#include "strata/env.hpp"
#include "strata/objective.hpp"
#include "strata/policy.hpp"
#include "strata/rng.hpp"
#include "strata/rollout.hpp"
#include "strata/serialize.hpp"

namespace strata {

// -- evaluation -- //

struct EvalResult {
  double success_rate = 0.0;
  double mean_outcome = 0.0;
  int episodes = 0;
};

// Greedy-free stochastic evaluation at eval_temperature. In strata mode each
// episode first samples one strategy and conditions on it (empty conditioning
// if the sample fails to parse); in flat mode episodes run unconditioned.
inline EvalResult evaluate(const Environment& env, const PolicyParams& params,
                           const RunConfig& cfg, int episodes,
                           uint64_t eval_root, CollectStats* stats = nullptr) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  const PolicyParams behaviour = params.as_role(ParamRole::kOld);
  const Vocab& vocab = Vocab::instance();
  uint64_t* ops = stats ? &stats->sampling_ops : nullptr;

  KahanSum success, outcome;
  for (int e = 0; e < episodes; ++e) {
    const uint64_t task_seed = derive_stream(eval_root, {1, uint64_t(e)}).next_u64();
    std::vector<TokenId> body;
    if (cfg.mode == "strata") {
      const EnvState s0 = env.reset(task_seed);
      const std::string prompt = std::string(kStrategyFrame) + env.observation(s0);
      Rng srng = derive_stream(eval_root, {2, uint64_t(e)});
      const SampledSeq s = sample_sequence(Channel::kStrategy, behaviour, {},
                                           prompt, srng, cfg.eval_temperature,
                                           cfg.max_strategy_tokens, ops);
      if (stats) stats->strategy_tokens += s.seq.size();
      const ParsedStrategy parsed = parse_strategy(vocab.detokenize(s.seq));
      if (parsed.ok) body = parsed.body.tokens;
    }
    Rng rng = derive_stream(eval_root, {3, uint64_t(e)});
    const Trajectory traj = detail::run_episode(
        env, behaviour, body, task_seed, rng, cfg.eval_temperature, cfg, stats);
    success.add(traj.success_score);
    outcome.add(traj.outcome_reward);
  }
  EvalResult r;
  r.episodes = episodes;
  r.success_rate = success.sum / double(episodes);
  r.mean_outcome = outcome.sum / double(episodes);
  return r;
}

// -- optimizer -- //

namespace detail {

struct OptimizerState {
  std::vector<double> accum;  // squared-gradient accumulator (adaptive only)
};

// Gradient ascent on the objective. "sgd" takes the raw step; "adaptive"
// scales each coordinate by the root of its accumulated squared gradient
// and applies decoupled weight decay.
inline void apply_update(PolicyParams& params, const std::vector<double>& grad,
                         const RunConfig& cfg, OptimizerState& opt) {
  if (grad.size() != params.w.size())
    throw std::logic_error("apply_update: gradient shape mismatch");
  if (cfg.optimizer == "adaptive") {
    if (opt.accum.size() != grad.size()) opt.accum.assign(grad.size(), 0.0);
    for (size_t i = 0; i < grad.size(); ++i) {
      opt.accum[i] += grad[i] * grad[i];
      const double scaled = grad[i] / (std::sqrt(opt.accum[i]) + 1e-8);
      params.w[i] += cfg.learning_rate * scaled;
      params.w[i] -= cfg.learning_rate * cfg.weight_decay * params.w[i];
    }
  } else {
    for (size_t i = 0; i < grad.size(); ++i)
      params.w[i] += cfg.learning_rate * grad[i];
  }
}

inline double l2_norm(const std::vector<double>& v) {
  KahanSum s;
  for (double x : v) s.add(x * x);
  return std::sqrt(s.sum);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

// -- training loop -- //

struct TrainOptions {
  std::string out_dir;               // "" = keep everything in memory
  bool dump_trajectories = false;    // write step-<s>.bin rollout dumps
  std::function<void(const MetricsRow&)> on_step;  // progress callback
};

struct TrainResult {
  PolicyParams params;            // final live parameters
  std::vector<MetricsRow> metrics;  // one row per training step
  CollectStats stats;             // cumulative collection counters
  double reward_min = 0.0;        // tightest observed reward range
  double reward_max = 0.0;
  bool aborted = false;           // true if a non-finite value stopped training
  std::string abort_reason;
};

inline PolicyParams init_params(const RunConfig& cfg) {
  PolicyParams p = PolicyParams::zeros(cfg.vocab_size(), cfg.d, ParamRole::kCurrent);
  if (cfg.init_scale > 0.0) {
    Rng rng = derive_stream(cfg.seed, {7});
    for (double& w : p.w) w = cfg.init_scale * (2.0 * rng.next_double() - 1.0);
  }
  return p;
}

inline TrainResult train(const RunConfig& cfg, const TrainOptions& opts = {}) {
  {
    const std::vector<std::string> errors = validate_config(cfg);
    if (!errors.empty()) {
      std::string joined = "invalid config:";
      for (const std::string& e : errors) joined += "\n  " + e;
      throw std::invalid_argument(joined);
    }
  }
  const Environment env(cfg.env, cfg.horizon);
  const bool strata_mode = cfg.mode == "strata";

  TrainResult result;
  result.params = init_params(cfg);
  const PolicyParams reference = result.params.as_role(ParamRole::kReference);
  detail::OptimizerState opt;

  std::ofstream metrics_file;
  if (!opts.out_dir.empty()) {
    metrics_file.open(opts.out_dir + "/metrics.jsonl", std::ios::trunc);
    if (!metrics_file)
      throw std::runtime_error("cannot write metrics in " + opts.out_dir);
  }

  bool any_reward = false;
  for (int step = 1; step <= cfg.training_steps; ++step) {
    const PolicyParams behaviour = result.params.as_role(ParamRole::kOld);

    // Collect one batch of tasks under the frozen behaviour snapshot.
    std::vector<HierarchicalBatch> hbatches;
    std::vector<FlatBatch> fbatches;
    CollectStats step_stats;
    double step_min = 0.0, step_max = 0.0;
    bool step_any = false;
    auto track = [&](const std::vector<RewardRecord>& records) {
      for (const RewardRecord& r : records) {
        if (!step_any) {
          step_min = step_max = r.total;
          step_any = true;
        } else {
          step_min = std::min(step_min, r.total);
          step_max = std::max(step_max, r.total);
        }
      }
    };
    for (int b = 0; b < cfg.batch_size; ++b) {
      const uint64_t task_seed =
          derive_stream(cfg.seed, {10, uint64_t(step), uint64_t(b)}).next_u64();
      const uint64_t rng_root =
          derive_stream(cfg.seed, {11, uint64_t(step), uint64_t(b)}).next_u64();
      if (strata_mode) {
        hbatches.push_back(
            collect_task(env, behaviour, cfg, task_seed, rng_root, &step_stats));
        track(hbatches.back().reward_records);
      } else {
        fbatches.push_back(
            collect_task_flat(env, behaviour, cfg, task_seed, rng_root, &step_stats));
        track(fbatches.back().reward_records);
      }
    }
    result.stats += step_stats;
    if (step_any) {
      if (!any_reward) {
        result.reward_min = step_min;
        result.reward_max = step_max;
        any_reward = true;
      } else {
        result.reward_min = std::min(result.reward_min, step_min);
        result.reward_max = std::max(result.reward_max, step_max);
      }
    }

    if (opts.dump_trajectories && !opts.out_dir.empty()) {
      const BatchDump dump = strata_mode ? make_dump(hbatches.front())
                                         : make_dump(fbatches.front());
      write_dump(dump, opts.out_dir + "/step-" + std::to_string(step) + ".bin");
    }

    // All tasks enter one objective; scaling each response weight by the
    // batch size keeps the surrogate a task mean while the KL stays a
    // token mean over the whole collection.
    std::vector<ResponseView> responses;
    for (const HierarchicalBatch& b : hbatches) {
      std::vector<ResponseView> r = collect_responses(b, cfg);
      responses.insert(responses.end(), r.begin(), r.end());
    }
    for (const FlatBatch& b : fbatches) {
      std::vector<ResponseView> r = collect_responses(b, cfg);
      responses.insert(responses.end(), r.begin(), r.end());
    }
    for (ResponseView& r : responses) r.weight /= double(cfg.batch_size);

    MetricsRow row;
    row.step = step;
    row.mode = cfg.mode;
    double grad_norm = 0.0;
    for (int u = 0; u < cfg.updates_per_collection; ++u) {
      const ObjectiveResult obj =
          evaluate_objective(responses, result.params, reference, cfg, true);
      if (!std::isfinite(obj.value.objective) || !detail::all_finite(obj.gradient)) {
        result.aborted = true;
        result.abort_reason = "non-finite objective or gradient at step " +
                              std::to_string(step);
        break;
      }
      if (u == 0) {
        row.objective = obj.value.objective;
        row.strategy_term = obj.value.strategy_term;
        row.action_term = obj.value.action_term;
        row.kl = obj.value.kl;
        grad_norm = detail::l2_norm(obj.gradient);
      }
      detail::apply_update(result.params, obj.gradient, cfg, opt);
    }
    if (result.aborted) break;

    if (cfg.eval_episodes > 0) {
      const uint64_t eval_root =
          derive_stream(cfg.seed, {12, uint64_t(step)}).next_u64();
      const EvalResult ev =
          evaluate(env, result.params, cfg, cfg.eval_episodes, eval_root);
      row.mean_outcome = ev.mean_outcome;
      row.success_rate = ev.success_rate;
    }
    row.grad_norm = grad_norm;
    row.reward_min = result.reward_min;
    row.reward_max = result.reward_max;
    row.strategy_tokens = result.stats.strategy_tokens;
    row.action_tokens = result.stats.action_tokens;
    row.judge_tokens = result.stats.judge_tokens;
    result.metrics.push_back(row);
    if (metrics_file) {
      metrics_file << metrics_line(row) << "\n";
      metrics_file.flush();
    }
    if (opts.on_step) opts.on_step(row);

    if (!opts.out_dir.empty() &&
        (step % cfg.checkpoint_every == 0 || step == cfg.training_steps)) {
      save_params(result.params,
                  opts.out_dir + "/ckpt-" + std::to_string(step) + ".bin");
    }
  }
  return result;
}

// -- finite-difference gradient check -- //

struct GradCheckResult {
  double max_rel_err = 0.0;
  int trials = 0;
  int coords_checked = 0;
};

namespace detail {

inline PolicyParams random_params(int v, int d, double scale, ParamRole role,
                                  Rng& rng) {
  PolicyParams p = PolicyParams::zeros(v, d, role);
  for (double& w : p.w) w = scale * (2.0 * rng.next_double() - 1.0);
  return p;
}

}  // namespace detail

// Compares the analytic objective gradient against central finite
// differences on real collected batches. Behaviour, current, and reference
// parameters are all different random draws so the ratio clipping and the
// KL term are both exercised away from their trivial fixed points. The
// check covers every coordinate with non-negligible analytic gradient
// (capped) plus a random sample of the rest, so both wrong values and
// missing contributions are caught.
inline GradCheckResult grad_check(int trials, uint64_t seed,
                                  double fd_step = 1e-5, int feature_dim = 64) {
  if (trials < 1) throw std::invalid_argument("grad_check: trials must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("grad_check: feature_dim < 1");
  GradCheckResult out;
  out.trials = trials;

  RunConfig cfg;
  cfg.env = "chain-key";
  cfg.d = feature_dim;
  cfg.d_embed = 16;
  cfg.n = 2;
  cfg.m = 2;
  cfg.sigma = 2.0;
  cfg.max_strategy_tokens = 4;
  cfg.max_action_tokens = 4;
  cfg.beta = 0.01;  // large enough that a wrong KL gradient is visible

  for (int trial = 0; trial < trials; ++trial) {
    cfg.mode = (trial % 2 == 0) ? "strata" : "flat-grpo";
    Rng prng = derive_stream(seed, {20, uint64_t(trial)});
    const PolicyParams behaviour =
        detail::random_params(cfg.vocab_size(), cfg.d, 0.3, ParamRole::kOld, prng);
    PolicyParams current =
        detail::random_params(cfg.vocab_size(), cfg.d, 0.3, ParamRole::kCurrent, prng);
    const PolicyParams reference = detail::random_params(
        cfg.vocab_size(), cfg.d, 0.3, ParamRole::kReference, prng);

    const Environment env(cfg.env, cfg.horizon);
    const uint64_t task_seed = derive_stream(seed, {21, uint64_t(trial)}).next_u64();
    const uint64_t rng_root = derive_stream(seed, {22, uint64_t(trial)}).next_u64();

    std::vector<ResponseView> responses;
    HierarchicalBatch hb;
    FlatBatch fb;
    if (cfg.mode == "strata") {
      hb = collect_task(env, behaviour, cfg, task_seed, rng_root);
      responses = collect_responses(hb, cfg);
    } else {
      fb = collect_task_flat(env, behaviour, cfg, task_seed, rng_root);
      responses = collect_responses(fb, cfg);
    }

    const ObjectiveResult analytic =
        evaluate_objective(responses, current, reference, cfg, true);

    // coordinates to probe: all with |g| above threshold (capped), plus a
    // random sample of the remainder to catch missing contributions
    std::vector<size_t> coords;
    double gmax = 0.0;
    for (double g : analytic.gradient) gmax = std::max(gmax, std::fabs(g));
    for (size_t i = 0; i < analytic.gradient.size() && coords.size() < 400; ++i)
      if (std::fabs(analytic.gradient[i]) > 1e-3 * gmax) coords.push_back(i);
    Rng crng = derive_stream(seed, {23, uint64_t(trial)});
    for (int extra = 0; extra < 50; ++extra)
      coords.push_back(size_t(crng.next_below(uint64_t(analytic.gradient.size()))));
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

    double num_max = 0.0, diff_max = 0.0;
    for (size_t i : coords) {
      const double saved = current.w[i];
      current.w[i] = saved + fd_step;
      const double up =
          evaluate_objective(responses, current, reference, cfg, false).value.objective;
      current.w[i] = saved - fd_step;
      const double down =
          evaluate_objective(responses, current, reference, cfg, false).value.objective;
      current.w[i] = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      num_max = std::max(num_max, std::fabs(numeric));
      diff_max = std::max(diff_max, std::fabs(numeric - analytic.gradient[i]));
    }
    const double scale = std::max({gmax, num_max, 1e-12});
    out.max_rel_err = std::max(out.max_rel_err, diff_max / scale);
    out.coords_checked += int(coords.size());
  }
  return out;
}

}  // namespace strata
