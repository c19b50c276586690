#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/config.hpp"
#include "strata/rewards.hpp"
#include "strata/types.hpp"

namespace strata {

// Group-relative normalization: (r - mean) / max(population std, eps).
// A group that agrees on everything carries no signal, so it maps to all
// zeros rather than to noise amplified off the std floor.
inline std::vector<double> normalize_group(const std::vector<double>& rewards,
                                           double eps_std = 1e-8) {
  if (rewards.size() < 2)
    throw std::invalid_argument(
        "normalize_group: need at least 2 rewards, got " +
        std::to_string(rewards.size()));
  bool all_equal = true;
  for (double r : rewards) all_equal = all_equal && r == rewards[0];
  if (all_equal) return std::vector<double>(rewards.size(), 0.0);

  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= double(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= double(rewards.size());
  const double denom = std::max(std::sqrt(var), eps_std);

  std::vector<double> out(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

inline std::vector<double> broadcast_outcome(const Trajectory& traj) {
  return std::vector<double>(traj.steps.size(), traj.outcome_reward);
}

namespace detail {

// Shaped per-step reward: broadcast outcome plus that step's own length,
// format and judge terms, clipped into [-1, 1].
inline double shaped_step_reward(const Trajectory& traj, const StepRecord& step,
                                 const std::vector<int>& flags,
                                 const RunConfig& cfg) {
  const double len_pen =
      length_penalty(int(step.action.size()), cfg.l_total, cfg.lambda);
  const double fmt_pen = format_penalty(step.parse_ok);
  const double judge_pen = judge_penalty(flags, step.step_index, cfg.kappa);
  return final_action_reward(traj.outcome_reward, len_pen, fmt_pen, judge_pen);
}

}  // namespace detail

// Assembles the hierarchical batch: one strategy-level group of N shaped
// strategy rewards, plus N action-level groups of M rollouts each. Action
// advantages default to one scalar per trajectory (mean shaped step reward,
// normalized within the strategy's group and broadcast over its steps);
// normalization=per-step instead treats every step as its own group member.
inline HierarchicalBatch build_hierarchical_batch(
    uint64_t task_seed, std::vector<StrategySample> strategies,
    std::vector<std::vector<Trajectory>> rollouts,
    std::vector<std::vector<std::vector<int>>> judge_flags,
    const RunConfig& cfg) {
  const size_t n = strategies.size();
  if (n < 1) throw std::invalid_argument("build_hierarchical_batch: no strategies");
  if (n < 2)
    throw std::invalid_argument(
        "build_hierarchical_batch: singleton strategy group has no baseline");
  if (rollouts.size() != n || judge_flags.size() != n)
    throw std::invalid_argument("build_hierarchical_batch: shape mismatch");
  for (size_t i = 0; i < n; ++i)
    if (rollouts[i].empty() || rollouts[i].size() != judge_flags[i].size())
      throw std::invalid_argument("build_hierarchical_batch: shape mismatch");

  HierarchicalBatch batch;
  batch.task_seed = task_seed;
  batch.strategies = std::move(strategies);
  batch.rollouts = std::move(rollouts);
  batch.judge_flags = std::move(judge_flags);

  batch.strategy_rewards.resize(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> outcomes;
    outcomes.reserve(batch.rollouts[i].size());
    for (const Trajectory& t : batch.rollouts[i]) outcomes.push_back(t.outcome_reward);
    const double top = top_delta_reward(outcomes, cfg.delta);
    const StrategySample& ss = batch.strategies[i];
    const double len_pen =
        length_penalty(int(ss.raw.size()), cfg.l_total, cfg.lambda);
    const double fmt_pen = format_penalty(ss.parse_ok);
    batch.strategy_rewards[i] = final_strategy_reward(top, len_pen, fmt_pen);

    RewardRecord rec;
    rec.source = RewardSource::kStrategy;
    rec.strategy_index = int(i);
    rec.outcome = top;
    rec.length_penalty = len_pen;
    rec.format_penalty = fmt_pen;
    rec.total = batch.strategy_rewards[i];
    batch.reward_records.push_back(rec);
  }
  batch.strategy_advantages = normalize_group(batch.strategy_rewards);

  batch.action_advantages.resize(n);
  if (cfg.normalization == "per-step") batch.step_advantages.resize(n);

  for (size_t i = 0; i < n; ++i) {
    const auto& group = batch.rollouts[i];
    std::vector<std::vector<double>> step_rewards(group.size());
    std::vector<double> traj_scalars(group.size(), 0.0);
    for (size_t j = 0; j < group.size(); ++j) {
      const Trajectory& traj = group[j];
      if (traj.steps.empty())
        throw std::invalid_argument("build_hierarchical_batch: empty trajectory");
      for (const StepRecord& step : traj.steps) {
        const double r =
            detail::shaped_step_reward(traj, step, batch.judge_flags[i][j], cfg);
        step_rewards[j].push_back(r);
        traj_scalars[j] += r;

        RewardRecord rec;
        rec.source = RewardSource::kAction;
        rec.strategy_index = int(i);
        rec.rollout_index = int(j);
        rec.step_index = step.step_index;
        rec.outcome = traj.outcome_reward;
        rec.length_penalty =
            length_penalty(int(step.action.size()), cfg.l_total, cfg.lambda);
        rec.format_penalty = format_penalty(step.parse_ok);
        rec.judge_penalty =
            judge_penalty(batch.judge_flags[i][j], step.step_index, cfg.kappa);
        rec.total = r;
        batch.reward_records.push_back(rec);
      }
      traj_scalars[j] /= double(traj.steps.size());
    }

    if (cfg.normalization == "per-step") {
      // every step of the group is one sample in a single pooled group
      std::vector<double> pooled;
      for (const auto& sr : step_rewards) pooled.insert(pooled.end(), sr.begin(), sr.end());
      const std::vector<double> norm = normalize_group(pooled);
      batch.step_advantages[i].resize(group.size());
      size_t at = 0;
      for (size_t j = 0; j < group.size(); ++j) {
        batch.step_advantages[i][j].assign(norm.begin() + long(at),
                                           norm.begin() + long(at + step_rewards[j].size()));
        at += step_rewards[j].size();
      }
      batch.action_advantages[i].assign(group.size(), 0.0);  // unused in this mode
    } else {
      batch.action_advantages[i] = group.size() >= 2
                                       ? normalize_group(traj_scalars)
                                       : std::vector<double>{0.0};
    }
  }
  return batch;
}

// Flat baseline: one group of G trajectories, no strategies, no judge.
inline FlatBatch build_flat_batch(uint64_t task_seed,
                                  std::vector<Trajectory> rollouts,
                                  const RunConfig& cfg) {
  if (rollouts.size() < 2)
    throw std::invalid_argument("build_flat_batch: need at least 2 rollouts");
  FlatBatch batch;
  batch.task_seed = task_seed;
  batch.rollouts = std::move(rollouts);

  const std::vector<int> no_flags;
  std::vector<double> traj_scalars(batch.rollouts.size(), 0.0);
  for (size_t j = 0; j < batch.rollouts.size(); ++j) {
    const Trajectory& traj = batch.rollouts[j];
    if (traj.steps.empty())
      throw std::invalid_argument("build_flat_batch: empty trajectory");
    for (const StepRecord& step : traj.steps) {
      const double r = detail::shaped_step_reward(traj, step, no_flags, cfg);
      traj_scalars[j] += r;

      RewardRecord rec;
      rec.source = RewardSource::kAction;
      rec.strategy_index = -1;
      rec.rollout_index = int(j);
      rec.step_index = step.step_index;
      rec.outcome = traj.outcome_reward;
      rec.length_penalty =
          length_penalty(int(step.action.size()), cfg.l_total, cfg.lambda);
      rec.format_penalty = format_penalty(step.parse_ok);
      rec.total = r;
      batch.reward_records.push_back(rec);
    }
    traj_scalars[j] /= double(traj.steps.size());
  }
  batch.advantages = normalize_group(traj_scalars);
  return batch;
}

}  // namespace strata
