#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/vocab.hpp"

namespace strata {

inline double clip(double x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip: lo > hi");
  return x < lo ? lo : (x > hi ? hi : x);
}

// High-level plan sampled once per episode. `body` holds the tokens between
// the strategy tags; empty body means the rollout ran unconditioned.
struct Strategy {
  TokenSeq body;
  std::vector<double> embedding;  // unit L2 norm when present, else empty

  bool operator==(const Strategy& o) const {
    return body == o.body && embedding == o.embedding;
  }
};

// One environment step as seen by the learner. Logprobs are the behaviour
// policy's (the snapshot used for sampling), one entry per action token.
struct StepRecord {
  std::string state_text;
  TokenSeq action;
  bool parse_ok = false;
  int step_index = 0;  // 1-based
  std::vector<double> logprobs_old;

  bool operator==(const StepRecord& o) const {
    return state_text == o.state_text && action == o.action &&
           parse_ok == o.parse_ok && step_index == o.step_index &&
           logprobs_old == o.logprobs_old;
  }
};

struct Trajectory {
  uint64_t task_seed = 0;
  Strategy strategy;
  std::vector<StepRecord> steps;
  bool terminated = false;       // reached a terminal state before the horizon
  double success_score = 0.0;    // in [0, 1]
  double outcome_reward = 0.0;   // in [0, 1]

  bool operator==(const Trajectory& o) const {
    return task_seed == o.task_seed && strategy == o.strategy &&
           steps == o.steps && terminated == o.terminated &&
           success_score == o.success_score && outcome_reward == o.outcome_reward;
  }
};

// Full record of one strategy draw, kept so the optimizer can re-score the
// strategy tokens later. `raw` is the unparsed sample (tags included).
struct StrategySample {
  TokenSeq raw;
  std::string prompt_text;
  std::vector<double> logprobs_old;  // one per raw token
  bool parse_ok = false;
  Strategy strategy;                 // parsed body (empty when parse failed)
};

// Where a reward-bearing record came from. Judgment passes never produce
// one of these; that absence is asserted by tests.
enum class RewardSource { kStrategy, kAction };

struct RewardRecord {
  RewardSource source;
  int strategy_index = -1;   // which group
  int rollout_index = -1;    // -1 for strategy records
  int step_index = -1;       // -1 for strategy and per-trajectory records
  double outcome = 0.0;
  double length_penalty = 0.0;
  double format_penalty = 0.0;
  double judge_penalty = 0.0;
  double total = 0.0;        // clipped sum, in [-1, 1]
};

// One strategy group: N strategies, M rollouts each. Advantages are stored
// one scalar per strategy and one per trajectory (broadcast over its steps);
// the per-step normalization variant fills step_advantages instead.
struct HierarchicalBatch {
  uint64_t task_seed = 0;
  std::vector<StrategySample> strategies;              // N
  std::vector<std::vector<Trajectory>> rollouts;       // N x M
  std::vector<std::vector<std::vector<int>>> judge_flags;  // N x M, 1-based steps
  std::vector<double> strategy_rewards;                // N, shaped + clipped
  std::vector<double> strategy_advantages;             // N
  std::vector<std::vector<double>> action_advantages;  // N x M, per trajectory
  // per-step advantages, only filled when normalization=per-step
  std::vector<std::vector<std::vector<double>>> step_advantages;
  std::vector<RewardRecord> reward_records;
};

struct FlatBatch {
  uint64_t task_seed = 0;
  std::vector<Trajectory> rollouts;   // G
  std::vector<double> advantages;     // G, per trajectory
  std::vector<RewardRecord> reward_records;
};

// Token-sampling and arithmetic-work counters, filled during collection.
// fps/embed work is counted in multiply-adds so overhead claims can be
// checked without wall clocks.
struct CollectStats {
  uint64_t strategy_tokens = 0;
  uint64_t action_tokens = 0;
  uint64_t judge_tokens = 0;
  uint64_t embed_ops = 0;
  uint64_t fps_ops = 0;
  uint64_t sampling_ops = 0;  // feature-dot multiply-adds spent sampling

  uint64_t total_tokens() const {
    return strategy_tokens + action_tokens + judge_tokens;
  }
  CollectStats& operator+=(const CollectStats& o) {
    strategy_tokens += o.strategy_tokens;
    action_tokens += o.action_tokens;
    judge_tokens += o.judge_tokens;
    embed_ops += o.embed_ops;
    fps_ops += o.fps_ops;
    sampling_ops += o.sampling_ops;
    return *this;
  }
};

}  // namespace strata
