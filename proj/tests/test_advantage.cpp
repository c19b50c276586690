#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "strata/advantage.hpp"
#include "strata/rng.hpp"

using namespace strata;

namespace {

Trajectory make_traj(double outcome, const std::vector<int>& action_lens,
                     const std::vector<bool>& ok) {
  Trajectory t;
  t.outcome_reward = outcome;
  t.success_score = outcome > 0 ? 1.0 : 0.0;
  t.terminated = outcome > 0;
  for (size_t i = 0; i < action_lens.size(); ++i) {
    StepRecord s;
    s.state_text = "obs";
    s.step_index = int(i) + 1;
    s.parse_ok = ok[i];
    s.action.tokens.assign(size_t(action_lens[i]), TokenId(1));
    s.logprobs_old.assign(size_t(action_lens[i]), -1.0);
    t.steps.push_back(std::move(s));
  }
  return t;
}

StrategySample make_strategy(int raw_len, bool parse_ok) {
  StrategySample s;
  s.raw.tokens.assign(size_t(raw_len), TokenId(1));
  s.logprobs_old.assign(size_t(raw_len), -1.0);
  s.parse_ok = parse_ok;
  if (parse_ok) {
    s.strategy.body.tokens = {TokenId(1)};
    s.strategy.embedding = {1.0};
  }
  return s;
}

}  // namespace

TEST_CASE("group normalization matches hand-computed cases") {
  const auto a = normalize_group({3.0, 1.0, 1.0, 1.0});
  // mean 1.5, population std sqrt(0.75)
  CHECK(a[0] == Catch::Approx(1.7320508075688772).epsilon(1e-12));
  CHECK(a[1] == Catch::Approx(-0.5773502691896258).epsilon(1e-12));
  CHECK(a[2] == a[1]);
  CHECK(a[3] == a[1]);

  const auto b = normalize_group({1.0, 0.0});
  CHECK(b[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b[1] == Catch::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("agreeing groups carry exactly zero signal") {
  for (double v : {0.0, 1.0, -1.0, 0.3333333333333333}) {
    const auto a = normalize_group({v, v, v});
    CHECK(a == std::vector<double>{0.0, 0.0, 0.0});
  }
}

TEST_CASE("near-agreement is floored, not amplified") {
  const auto a = normalize_group({1e-12, 0.0});
  // true std is 5e-13, below the 1e-8 floor: outputs stay tiny
  CHECK(std::fabs(a[0]) < 1e-4);
  CHECK(std::fabs(a[1]) < 1e-4);
  CHECK(a[0] > 0.0);
  CHECK(a[1] < 0.0);
}

TEST_CASE("groups below two members are rejected") {
  CHECK_THROWS_AS(normalize_group({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(normalize_group({}), std::invalid_argument);
}

TEST_CASE("normalized groups have zero mean, unit spread, affine invariance") {
  Rng rng;
  rng.state = 246;
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t k = 2 + rng.next_below(14);
    std::vector<double> r;
    for (size_t i = 0; i < k; ++i) r.push_back(2.0 * rng.next_double() - 1.0);
    const auto a = normalize_group(r);

    double mean = 0.0;
    for (double x : a) mean += x;
    mean /= double(k);
    CHECK(std::fabs(mean) < 1e-9);

    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    var /= double(k);
    CHECK(std::sqrt(var) == Catch::Approx(1.0).epsilon(1e-6));

    // positive affine rescaling leaves the output unchanged
    std::vector<double> scaled;
    for (double x : r) scaled.push_back(2.5 * x + 0.7);
    const auto b = normalize_group(scaled);
    for (size_t i = 0; i < k; ++i) CHECK(b[i] == Catch::Approx(a[i]).margin(1e-9));
  }
}

TEST_CASE("outcome broadcasting covers every step") {
  const Trajectory t = make_traj(0.75, {2, 2, 2}, {true, true, true});
  CHECK(broadcast_outcome(t) == std::vector<double>{0.75, 0.75, 0.75});
}

TEST_CASE("hierarchical batch scores strategies by their best executions") {
  RunConfig cfg;  // delta 0.5, lambda 0.5, kappa 0.1, l_total 16
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(1.0, {2}, {true}), make_traj(0.6, {2}, {true})};
  rollouts[1] = {make_traj(0.2, {2}, {true}), make_traj(0.0, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}, {}}, {{}, {}}};

  const HierarchicalBatch b =
      build_hierarchical_batch(7, strategies, rollouts, flags, cfg);

  // top half = best single rollout: 1.0 and 0.2; no penalties apply
  CHECK(b.strategy_rewards[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b.strategy_rewards[1] == Catch::Approx(0.2).epsilon(1e-12));
  CHECK(b.strategy_advantages[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b.strategy_advantages[1] == Catch::Approx(-1.0).epsilon(1e-12));

  // within each strategy, the better rollout gets +1
  CHECK(b.action_advantages[0][0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b.action_advantages[0][1] == Catch::Approx(-1.0).epsilon(1e-12));
  CHECK(b.action_advantages[1][0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b.action_advantages[1][1] == Catch::Approx(-1.0).epsilon(1e-12));

  // records: 2 strategy + 4 action steps
  int strategy_recs = 0, action_recs = 0;
  for (const RewardRecord& r : b.reward_records) {
    if (r.source == RewardSource::kStrategy) ++strategy_recs;
    if (r.source == RewardSource::kAction) ++action_recs;
  }
  CHECK(strategy_recs == 2);
  CHECK(action_recs == 4);
}

TEST_CASE("strategy rewards cross-check against the scoring primitive") {
  RunConfig cfg;
  cfg.delta = 0.75;
  std::vector<StrategySample> strategies = {make_strategy(3, true),
                                            make_strategy(3, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(0.9, {2}, {true}), make_traj(0.5, {2}, {true}),
                 make_traj(0.1, {2}, {true})};
  rollouts[1] = {make_traj(0.4, {2}, {true}), make_traj(0.3, {2}, {true}),
                 make_traj(0.2, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}, {}, {}}, {{}, {}, {}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);
  CHECK(b.strategy_rewards[0] ==
        Catch::Approx(top_delta_reward({0.9, 0.5, 0.1}, 0.75)).epsilon(1e-12));
  CHECK(b.strategy_rewards[1] ==
        Catch::Approx(top_delta_reward({0.4, 0.3, 0.2}, 0.75)).epsilon(1e-12));
  // ceil(0.75 * 3) = 3 keeps every rollout, so the score is the full mean
  for (const RewardRecord& r : b.reward_records)
    if (r.source == RewardSource::kStrategy && r.strategy_index == 0)
      CHECK(r.outcome == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("unparseable strategies keep their format penalty") {
  RunConfig cfg;
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, false)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(0.5, {2}, {true}), make_traj(0.5, {2}, {true})};
  rollouts[1] = {make_traj(0.5, {2}, {true}), make_traj(0.5, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}, {}}, {{}, {}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);
  CHECK(b.strategy_rewards[0] == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(b.strategy_rewards[1] == Catch::Approx(-0.5).epsilon(1e-12));  // 0.5 - 1
  CHECK(b.strategy_advantages[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b.strategy_advantages[1] == Catch::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("long strategy emissions pay the length penalty") {
  RunConfig cfg;  // l_total 16, lambda 0.5: 12 tokens cost 0.5
  std::vector<StrategySample> strategies = {make_strategy(12, true),
                                            make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(1.0, {2}, {true}), make_traj(1.0, {2}, {true})};
  rollouts[1] = {make_traj(1.0, {2}, {true}), make_traj(1.0, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}, {}}, {{}, {}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);
  CHECK(b.strategy_rewards[0] == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(b.strategy_rewards[1] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("judge flags charge the flagged step only") {
  RunConfig cfg;  // kappa 0.1
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(0.5, {2, 2}, {true, true}),
                 make_traj(0.5, {2, 2}, {true, true})};
  rollouts[1] = {make_traj(0.5, {2}, {true}), make_traj(0.5, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{2}, {}}, {{}, {}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);

  double flagged_total = 0.0, unflagged_total = 0.0;
  for (const RewardRecord& r : b.reward_records) {
    if (r.source != RewardSource::kAction || r.strategy_index != 0) continue;
    if (r.rollout_index == 0 && r.step_index == 2) flagged_total = r.total;
    if (r.rollout_index == 0 && r.step_index == 1) unflagged_total = r.total;
    if (r.rollout_index == 0 && r.step_index == 2)
      CHECK(r.judge_penalty == Catch::Approx(-0.1));
  }
  CHECK(unflagged_total == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(flagged_total == Catch::Approx(0.4).epsilon(1e-12));

  // rollout 0 scalar mean (0.45) loses to rollout 1 (0.5)
  CHECK(b.action_advantages[0][0] == Catch::Approx(-1.0).epsilon(1e-12));
  CHECK(b.action_advantages[0][1] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("malformed steps pay the format penalty inside the shaped reward") {
  RunConfig cfg;
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(0.75, {2, 2}, {true, false}),
                 make_traj(0.75, {2, 2}, {true, true})};
  rollouts[1] = {make_traj(0.0, {2}, {true}), make_traj(0.0, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}, {}}, {{}, {}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);
  for (const RewardRecord& r : b.reward_records)
    if (r.source == RewardSource::kAction && r.strategy_index == 0 &&
        r.rollout_index == 0 && r.step_index == 2) {
      CHECK(r.format_penalty == -1.0);
      CHECK(r.total == Catch::Approx(-0.25).epsilon(1e-12));
    }
}

TEST_CASE("per-step normalization pools every step in a strategy group") {
  RunConfig cfg;
  cfg.normalization = "per-step";
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, true)};
  // shaped step rewards: traj A = {1.0, 0.5} (12-token action pays 0.5),
  // traj B = {0.5, 0.0}; pooled mean 0.5, population std sqrt(0.125)
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(1.0, {2, 12}, {true, true}),
                 make_traj(0.5, {2, 12}, {true, true})};
  rollouts[1] = {make_traj(0.5, {2}, {true}), make_traj(0.5, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}, {}}, {{}, {}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);

  REQUIRE(b.step_advantages.size() == 2);
  const double s = std::sqrt(2.0);
  CHECK(b.step_advantages[0][0][0] == Catch::Approx(s).epsilon(1e-12));
  CHECK(b.step_advantages[0][0][1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(b.step_advantages[0][1][0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(b.step_advantages[0][1][1] == Catch::Approx(-s).epsilon(1e-12));
  // the all-equal second group pools to zeros
  for (const auto& traj_adv : b.step_advantages[1])
    for (double a : traj_adv) CHECK(a == 0.0);
}

TEST_CASE("single-rollout groups fall back to zero advantage") {
  RunConfig cfg;
  cfg.m = 1;
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(1.0, {2}, {true})};
  rollouts[1] = {make_traj(0.0, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}}, {{}}};
  const HierarchicalBatch b =
      build_hierarchical_batch(1, strategies, rollouts, flags, cfg);
  CHECK(b.action_advantages[0] == std::vector<double>{0.0});
  CHECK(b.action_advantages[1] == std::vector<double>{0.0});
  // the strategy level still differentiates
  CHECK(b.strategy_advantages[0] == 1.0);
}

TEST_CASE("a lone strategy has no baseline and is rejected") {
  RunConfig cfg;
  std::vector<StrategySample> strategies = {make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts = {{make_traj(1.0, {2}, {true})}};
  std::vector<std::vector<std::vector<int>>> flags = {{{}}};
  CHECK_THROWS_WITH(build_hierarchical_batch(1, strategies, rollouts, flags, cfg),
                    Catch::Matchers::ContainsSubstring("singleton"));
}

TEST_CASE("shape mismatches are rejected") {
  RunConfig cfg;
  std::vector<StrategySample> strategies = {make_strategy(4, true),
                                            make_strategy(4, true)};
  std::vector<std::vector<Trajectory>> rollouts(2);
  rollouts[0] = {make_traj(1.0, {2}, {true})};
  rollouts[1] = {make_traj(0.0, {2}, {true})};
  std::vector<std::vector<std::vector<int>>> flags = {{{}}};  // one group short
  CHECK_THROWS_AS(build_hierarchical_batch(1, strategies, rollouts, flags, cfg),
                  std::invalid_argument);
  flags = {{{}}, {{}, {}}};  // wrong inner count
  CHECK_THROWS_AS(build_hierarchical_batch(1, strategies, rollouts, flags, cfg),
                  std::invalid_argument);
}

TEST_CASE("flat batches normalize one big group") {
  RunConfig cfg;
  std::vector<Trajectory> rollouts = {make_traj(1.0, {2}, {true}),
                                      make_traj(0.0, {2}, {true})};
  const FlatBatch b = build_flat_batch(9, rollouts, cfg);
  CHECK(b.advantages[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(b.advantages[1] == Catch::Approx(-1.0).epsilon(1e-12));
  CHECK(b.reward_records.size() == 2);
  for (const RewardRecord& r : b.reward_records) {
    CHECK(r.source == RewardSource::kAction);
    CHECK(r.strategy_index == -1);
    CHECK(r.judge_penalty == 0.0);  // no judge in the flat baseline
  }
  CHECK_THROWS_AS(build_flat_batch(9, {make_traj(1.0, {2}, {true})}, cfg),
                  std::invalid_argument);
}
