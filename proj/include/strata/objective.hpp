#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/advantage.hpp"
#include "strata/config.hpp"
#include "strata/policy.hpp"
#include "strata/types.hpp"

namespace strata {

// Compensated (Kahan) accumulator so batch-order permutations move sums by
// less than 1e-9 rather than accumulating drift.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

// Per-token clipped surrogate, asymmetric band [1-eps_low, 1+eps_high]:
// mean over tokens of min(ratio*A, clip(ratio)*A).
inline double clipped_surrogate(const std::vector<double>& ratios, double advantage,
                                double eps_low, double eps_high) {
  if (ratios.empty()) throw std::invalid_argument("clipped_surrogate: no ratios");
  if (!(eps_low > 0) || !(eps_high > 0))
    throw std::invalid_argument("clipped_surrogate: eps must be > 0");
  KahanSum acc;
  for (double rho : ratios) {
    const double unclipped = rho * advantage;
    const double clipped = clip(rho, 1.0 - eps_low, 1.0 + eps_high) * advantage;
    acc.add(std::min(unclipped, clipped));
  }
  return acc.sum / double(ratios.size());
}

// k3 estimator of KL(current || reference), averaged over tokens:
// r - log r - 1 with r = exp(logp_ref - logp_current). Non-negative, zero
// iff the logprobs agree.
inline double kl_term(const std::vector<double>& logp_current,
                      const std::vector<double>& logp_ref) {
  if (logp_current.size() != logp_ref.size())
    throw std::invalid_argument("kl_term: length mismatch");
  if (logp_current.empty()) throw std::invalid_argument("kl_term: empty");
  KahanSum acc;
  for (size_t i = 0; i < logp_current.size(); ++i) {
    const double logr = logp_ref[i] - logp_current[i];
    acc.add(std::exp(logr) - logr - 1.0);
  }
  return acc.sum / double(logp_current.size());
}

// One scored response: a token sequence with its behaviour-policy logprobs,
// its sampling context, and the advantage it carries.
struct ResponseView {
  const std::vector<TokenId>* strategy_ctx;  // conditioning tokens, may be empty
  const std::string* observation;
  const TokenSeq* tokens;
  const std::vector<double>* logprobs_old;
  double advantage = 0.0;
  double weight = 1.0;  // group-averaging factor applied to this response's L
  bool is_strategy = false;
};

namespace detail {

inline const std::vector<TokenId>& empty_ctx() {
  static const std::vector<TokenId> e;
  return e;
}

inline void check_response(const ResponseView& r) {
  if (r.tokens->size() == 0)
    throw std::invalid_argument("objective: empty response");
  if (r.tokens->size() != r.logprobs_old->size())
    throw std::invalid_argument("objective: logprob/token length mismatch");
}

}  // namespace detail

// Flattens a hierarchical batch into scored responses. The strategy group
// and the N action groups all enter one objective; with mean_over_groups
// the sums turn into means at each level (strategy group, rollout group,
// trajectory) instead of the plain literal sum.
inline std::vector<ResponseView> collect_responses(const HierarchicalBatch& batch,
                                                   const RunConfig& cfg) {
  const size_t n = batch.strategies.size();
  const bool per_step = cfg.normalization == "per-step";
  std::vector<ResponseView> out;
  ResponseView r;
  for (size_t i = 0; i < n; ++i) {
    r.strategy_ctx = &detail::empty_ctx();
    r.observation = &batch.strategies[i].prompt_text;
    r.tokens = &batch.strategies[i].raw;
    r.logprobs_old = &batch.strategies[i].logprobs_old;
    r.advantage = batch.strategy_advantages[i];
    r.weight = cfg.mean_over_groups ? 1.0 / double(n) : 1.0;
    r.is_strategy = true;
    detail::check_response(r);
    out.push_back(r);
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& group = batch.rollouts[i];
    for (size_t j = 0; j < group.size(); ++j) {
      const Trajectory& traj = group[j];
      for (size_t t = 0; t < traj.steps.size(); ++t) {
        const StepRecord& step = traj.steps[t];
        r.strategy_ctx = &traj.strategy.body.tokens;
        r.observation = &step.state_text;
        r.tokens = &step.action;
        r.logprobs_old = &step.logprobs_old;
        r.advantage = per_step ? batch.step_advantages[i][j][t]
                               : batch.action_advantages[i][j];
        r.weight = cfg.mean_over_groups
                       ? 1.0 / (double(n) * double(group.size()) *
                                double(traj.steps.size()))
                       : 1.0;
        r.is_strategy = false;
        detail::check_response(r);
        out.push_back(r);
      }
    }
  }
  return out;
}

// Flat baseline responses: mean over the group and over each trajectory's
// steps, matching plain group-relative optimization.
inline std::vector<ResponseView> collect_responses(const FlatBatch& batch,
                                                   const RunConfig&) {
  std::vector<ResponseView> out;
  ResponseView r;
  const size_t g = batch.rollouts.size();
  for (size_t j = 0; j < g; ++j) {
    const Trajectory& traj = batch.rollouts[j];
    for (const StepRecord& step : traj.steps) {
      r.strategy_ctx = &detail::empty_ctx();
      r.observation = &step.state_text;
      r.tokens = &step.action;
      r.logprobs_old = &step.logprobs_old;
      r.advantage = batch.advantages[j];
      r.weight = 1.0 / (double(g) * double(traj.steps.size()));
      r.is_strategy = false;
      detail::check_response(r);
      out.push_back(r);
    }
  }
  return out;
}

struct ObjectiveValue {
  double objective = 0.0;       // surrogate terms - beta * kl
  double strategy_term = 0.0;   // weighted strategy surrogate sum
  double action_term = 0.0;     // weighted action surrogate sum
  double kl = 0.0;              // token-averaged k3 estimate
  uint64_t token_count = 0;
};

struct ObjectiveResult {
  ObjectiveValue value;
  std::vector<double> gradient;  // same layout as PolicyParams.w; empty if not requested
};

// Evaluates the objective at `current` (re-scoring every token) and, when
// `want_gradient`, its exact gradient. The clip min() picks the unclipped
// branch on ties so the gradient is defined everywhere; the KL term treats
// only the current-policy logprobs as variable.
inline ObjectiveResult evaluate_objective(const std::vector<ResponseView>& responses,
                                          const PolicyParams& current,
                                          const PolicyParams& reference,
                                          const RunConfig& cfg,
                                          bool want_gradient) {
  if (current.role != ParamRole::kCurrent)
    throw std::logic_error("evaluate_objective: re-scoring needs the live parameters");
  if (reference.role != ParamRole::kReference)
    throw std::logic_error("evaluate_objective: KL needs the frozen reference");
  if (current.v != reference.v || current.d != reference.d)
    throw std::logic_error("evaluate_objective: parameter shape mismatch");

  uint64_t total_tokens = 0;
  for (const ResponseView& r : responses) {
    detail::check_response(r);
    total_tokens += r.tokens->size();
  }

  ObjectiveResult out;
  out.value.token_count = total_tokens;
  if (total_tokens == 0) {
    if (want_gradient) out.gradient.assign(current.w.size(), 0.0);
    return out;
  }

  KahanSum strategy_term, action_term, kl_sum;
  std::vector<double> grad, grad_carry;
  if (want_gradient) {
    grad.assign(current.w.size(), 0.0);
    grad_carry.assign(current.w.size(), 0.0);
  }
  auto grad_add = [&](size_t idx, double x) {
    const double y = x - grad_carry[idx];
    const double t = grad[idx] + y;
    grad_carry[idx] = (t - grad[idx]) - y;
    grad[idx] = t;
  };

  std::vector<TokenId> prefix;
  for (const ResponseView& r : responses) {
    const size_t len = r.tokens->size();
    const double per_tok = r.weight / double(len);
    prefix.clear();
    for (size_t k = 0; k < len; ++k) {
      const TokenId tok = r.tokens->tokens[k];
      const auto feats =
          featurize(r.is_strategy ? Channel::kStrategy : Channel::kAction,
                    *r.strategy_ctx, *r.observation, prefix, current.d);
      const TokenDistribution dist = token_distribution(current, feats, cfg.temperature);
      const double lp = dist.logprob(tok);
      const double lp_old = (*r.logprobs_old)[k];
      const double rho = std::exp(lp - lp_old);

      const double unclipped = rho * r.advantage;
      const double clipped =
          clip(rho, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high) * r.advantage;
      const double term = std::min(unclipped, clipped);
      (r.is_strategy ? strategy_term : action_term).add(per_tok * term);

      const TokenDistribution ref_dist =
          token_distribution(reference, feats, cfg.temperature);
      const double lp_ref = ref_dist.logprob(tok);
      const double logr = lp_ref - lp;
      const double ratio_ref = std::exp(logr);
      kl_sum.add(ratio_ref - logr - 1.0);

      if (want_gradient) {
        double scale = 0.0;
        if (unclipped <= clipped) scale += per_tok * r.advantage * rho;
        scale += -cfg.beta * (1.0 - ratio_ref) / double(total_tokens);
        if (scale != 0.0) {
          for (int32_t f : feats) {
            const size_t base = size_t(f) * size_t(current.v);
            const double* p = dist.probs.data();
            for (int t = 0; t < current.v; ++t) {
              const double coeff = ((t == tok ? 1.0 : 0.0) - p[t]) / cfg.temperature;
              grad_add(base + size_t(t), scale * coeff);
            }
          }
        }
      }
      prefix.push_back(tok);
    }
  }

  out.value.strategy_term = strategy_term.sum;
  out.value.action_term = action_term.sum;
  out.value.kl = kl_sum.sum / double(total_tokens);
  out.value.objective =
      strategy_term.sum + action_term.sum - cfg.beta * out.value.kl;
  if (want_gradient) out.gradient = std::move(grad);
  return out;
}

inline ObjectiveResult evaluate_objective(const HierarchicalBatch& batch,
                                          const PolicyParams& current,
                                          const PolicyParams& reference,
                                          const RunConfig& cfg, bool want_gradient) {
  return evaluate_objective(collect_responses(batch, cfg), current, reference, cfg,
                            want_gradient);
}

inline ObjectiveResult evaluate_objective(const FlatBatch& batch,
                                          const PolicyParams& current,
                                          const PolicyParams& reference,
                                          const RunConfig& cfg, bool want_gradient) {
  return evaluate_objective(collect_responses(batch, cfg), current, reference, cfg,
                            want_gradient);
}

}  // namespace strata
