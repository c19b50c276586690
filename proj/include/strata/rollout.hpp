#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/advantage.hpp"
#include "strata/config.hpp"
#include "strata/embed.hpp"
#include "strata/env.hpp"
#include "strata/judge.hpp"
#include "strata/policy.hpp"
#include "strata/rng.hpp"
#include "strata/types.hpp"

namespace strata {

// Fixed prompt frames. The strategy frame shows the tag format by example;
// the action frame is empty because the action context is the conditioning
// strategy plus the raw observation.
inline constexpr const char* kStrategyFrame =
    "propose one short plan wrapped as <strategy> plan words </strategy> "
    "for this task ";
inline constexpr const char* kActionFrame = "";

namespace detail {

inline const std::vector<TokenId>& empty_body() {
  static const std::vector<TokenId> e;
  return e;
}

// One rollout under a fixed (possibly empty) strategy conditioning.
inline Trajectory run_episode(const Environment& env,
                              const PolicyParams& behaviour,
                              const std::vector<TokenId>& strategy_body,
                              uint64_t task_seed, Rng& rng, double temperature,
                              const RunConfig& cfg, CollectStats* stats) {
  Trajectory traj;
  traj.task_seed = task_seed;
  traj.strategy.body.tokens = strategy_body;
  EnvState state = env.reset(task_seed);
  uint64_t* ops = stats ? &stats->sampling_ops : nullptr;
  while (!state.done) {
    const std::string obs = std::string(kActionFrame) + env.observation(state);
    const SampledSeq act =
        sample_sequence(Channel::kAction, behaviour, strategy_body, obs, rng,
                        temperature, cfg.max_action_tokens, ops);
    if (stats) stats->action_tokens += act.seq.size();
    StepResult res = env.step(state, act.seq);
    StepRecord rec;
    rec.state_text = obs;
    rec.action = act.seq;
    rec.parse_ok = res.parse_ok;
    rec.step_index = res.state.steps_elapsed;
    rec.logprobs_old = act.logprobs;
    traj.steps.push_back(std::move(rec));
    state = res.state;
  }
  traj.terminated = state.success;
  traj.success_score = state.success ? 1.0 : 0.0;
  traj.outcome_reward =
      outcome_reward(state.success, state.steps_elapsed, env.spec().horizon);
  return traj;
}

}  // namespace detail

// Strata-mode collection for one task: oversample sigma*N strategy
// candidates, keep the N most diverse parseable ones (unparseable samples
// only fill leftover slots, keeping their format penalty), then run M
// rollouts per strategy and one judgment pass per rollout.
inline HierarchicalBatch collect_task(const Environment& env,
                                      const PolicyParams& behaviour,
                                      const RunConfig& cfg, uint64_t task_seed,
                                      uint64_t rng_root,
                                      CollectStats* stats = nullptr) {
  if (behaviour.role != ParamRole::kOld)
    throw std::logic_error("collect_task: needs the behaviour snapshot");
  const Vocab& vocab = Vocab::instance();
  const EnvState s0 = env.reset(task_seed);
  const std::string strategy_prompt = std::string(kStrategyFrame) + env.observation(s0);

  const int candidates = cfg.candidate_count();
  std::vector<StrategySample> pool;
  pool.resize(size_t(candidates));
  std::vector<size_t> parseable;
  uint64_t* ops = stats ? &stats->sampling_ops : nullptr;
  for (int c = 0; c < candidates; ++c) {
    Rng rng = derive_stream(rng_root, {1, uint64_t(c)});
    const SampledSeq s =
        sample_sequence(Channel::kStrategy, behaviour, {}, strategy_prompt, rng,
                        cfg.temperature, cfg.max_strategy_tokens, ops);
    if (stats) stats->strategy_tokens += s.seq.size();
    StrategySample& sample = pool[size_t(c)];
    sample.raw = s.seq;
    sample.prompt_text = strategy_prompt;
    sample.logprobs_old = s.logprobs;
    const ParsedStrategy parsed = parse_strategy(vocab.detokenize(s.seq));
    sample.parse_ok = parsed.ok;
    if (parsed.ok) {
      sample.strategy.body = parsed.body;
      sample.strategy.embedding = embed_strategy(
          parsed.body.tokens, cfg.d_embed, stats ? &stats->embed_ops : nullptr);
      parseable.push_back(size_t(c));
    }
  }

  std::vector<size_t> chosen;
  if (parseable.size() >= size_t(cfg.n)) {
    std::vector<std::vector<double>> emb;
    emb.reserve(parseable.size());
    for (size_t idx : parseable) emb.push_back(pool[idx].strategy.embedding);
    const std::vector<size_t> sel =
        fps_select(emb, size_t(cfg.n), stats ? &stats->fps_ops : nullptr);
    for (size_t s : sel) chosen.push_back(parseable[s]);
  } else {
    // too few parseable candidates: take them all, then fill the remaining
    // slots with unparseable samples in sampling order
    chosen = parseable;
    for (size_t c = 0; c < pool.size() && chosen.size() < size_t(cfg.n); ++c)
      if (!pool[c].parse_ok) chosen.push_back(c);
  }
  if (chosen.size() != size_t(cfg.n))
    throw std::logic_error("collect_task: selection produced the wrong count");

  std::vector<StrategySample> selected;
  selected.reserve(chosen.size());
  for (size_t c : chosen) selected.push_back(pool[c]);

  std::vector<std::vector<Trajectory>> rollouts(size_t(cfg.n));
  std::vector<std::vector<std::vector<int>>> flags(size_t(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    const std::vector<TokenId>& body =
        selected[size_t(i)].parse_ok ? selected[size_t(i)].strategy.body.tokens
                                     : detail::empty_body();
    rollouts[size_t(i)].reserve(size_t(cfg.m));
    for (int j = 0; j < cfg.m; ++j) {
      Rng rng = derive_stream(rng_root, {2, uint64_t(i), uint64_t(j)});
      Trajectory traj = detail::run_episode(env, behaviour, body, task_seed, rng,
                                            cfg.temperature, cfg, stats);
      std::vector<int> f;
      if (cfg.judge == "oracle") {
        f = oracle_judge(env, body, traj);
      } else if (cfg.judge == "policy") {
        Rng jrng = derive_stream(rng_root, {3, uint64_t(i), uint64_t(j)});
        f = policy_judge(behaviour, body, traj, cfg, jrng, stats);
      }
      rollouts[size_t(i)].push_back(std::move(traj));
      flags[size_t(i)].push_back(std::move(f));
    }
  }
  return build_hierarchical_batch(task_seed, std::move(selected),
                                  std::move(rollouts), std::move(flags), cfg);
}

// Flat baseline for the same task budget: G unconditioned rollouts in a
// single group, no strategies, no judge.
inline FlatBatch collect_task_flat(const Environment& env,
                                   const PolicyParams& behaviour,
                                   const RunConfig& cfg, uint64_t task_seed,
                                   uint64_t rng_root,
                                   CollectStats* stats = nullptr) {
  if (behaviour.role != ParamRole::kOld)
    throw std::logic_error("collect_task_flat: needs the behaviour snapshot");
  const int g = cfg.n * cfg.m;
  std::vector<Trajectory> rollouts;
  rollouts.reserve(size_t(g));
  for (int j = 0; j < g; ++j) {
    Rng rng = derive_stream(rng_root, {4, uint64_t(j)});
    rollouts.push_back(detail::run_episode(env, behaviour, {}, task_seed, rng,
                                           cfg.temperature, cfg, stats));
  }
  return build_flat_batch(task_seed, std::move(rollouts), cfg);
}

}  // namespace strata
