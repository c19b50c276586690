#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "strata/types.hpp"

namespace strata {

// Piecewise length penalty over the response token budget. Free below
// lambda*l_total, linear down to -1 at l_total, -1 past the cap:
//   0                                       len <= lambda*L
//   -(1/(1-lambda)) * (len/L - lambda)      lambda*L < len <= L
//   -1                                      len > L
inline double length_penalty(int len, int l_total, double lambda) {
  if (len < 0) throw std::invalid_argument("length_penalty: len < 0");
  if (l_total <= 0) throw std::invalid_argument("length_penalty: l_total <= 0");
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::invalid_argument("length_penalty: lambda must be in [0, 1)");
  const double L = double(l_total);
  if (double(len) <= lambda * L) return 0.0;
  if (double(len) <= L) return -(1.0 / (1.0 - lambda)) * (double(len) / L - lambda);
  return -1.0;
}

inline double format_penalty(bool parse_ok) { return parse_ok ? 0.0 : -1.0; }

// Mean of the best ceil(delta*M) rollout rewards; the strategy is scored by
// what its best executions achieve, not by the average attempt.
inline double top_delta_reward(std::vector<double> rewards, double delta) {
  if (rewards.empty()) throw std::invalid_argument("top_delta_reward: empty rewards");
  if (!(delta > 0.0 && delta <= 1.0))
    throw std::invalid_argument("top_delta_reward: delta must be in (0, 1]");
  const size_t k = size_t(std::ceil(delta * double(rewards.size())));
  std::sort(rewards.begin(), rewards.end(), std::greater<double>());
  double sum = 0.0;
  for (size_t i = 0; i < k; ++i) sum += rewards[i];
  return sum / double(k);
}

inline double judge_penalty(const std::vector<int>& flagged_steps, int step_index,
                            double kappa) {
  if (kappa < 0) throw std::invalid_argument("judge_penalty: kappa < 0");
  for (int f : flagged_steps)
    if (f == step_index) return -kappa;
  return 0.0;
}

inline double final_strategy_reward(double top_delta, double length_pen,
                                    double format_pen) {
  return clip(top_delta + length_pen + format_pen, -1.0, 1.0);
}

inline double final_action_reward(double outcome, double length_pen,
                                  double format_pen, double judge_pen) {
  return clip(outcome + length_pen + format_pen + judge_pen, -1.0, 1.0);
}

}  // namespace strata
