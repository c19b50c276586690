// Acceptance gate for the assembled training system. Each numbered check
// prints exactly one [PASS]/[FAIL] line with the measured values; the exit
// code is the number of failed checks. argv[1] names the directory holding
// the reference run configs (default: "configs").
//
// The heavyweight checks share one cache of full training runs so the whole
// gate stays inside a single CI budget: the hierarchical and flat runs feed
// the learning, ablation, reward-range, record-audit, and cost checks alike.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "strata/advantage.hpp"
#include "strata/config.hpp"
#include "strata/embed.hpp"
#include "strata/env.hpp"
#include "strata/judge.hpp"
#include "strata/rewards.hpp"
#include "strata/rng.hpp"
#include "strata/rollout.hpp"
#include "strata/serialize.hpp"
#include "strata/trainer.hpp"
#include "strata/vocab.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using namespace strata;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& what,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", criterion,
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunConfig load_cfg(const fs::path& p) {
  std::vector<std::string> errors;
  RunConfig cfg = parse_config(slurp(p), errors);
  if (!errors.empty()) {
    std::string joined = "bad config " + p.string() + ":";
    for (const std::string& e : errors) joined += " " + e;
    throw std::runtime_error(joined);
  }
  return cfg;
}

double median3(double a, double b, double c) {
  std::vector<double> v{a, b, c};
  std::sort(v.begin(), v.end());
  return v[1];
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// One cached training run: the trainer result plus a stochastic evaluation
// of the final parameters (16 fresh episodes at the config's eval
// temperature, evaluation root derived from the seed the same way the CLI
// derives it).
struct RunOut {
  TrainResult tr;
  double eval_success = 0.0;
  double seconds = 0.0;
};

RunOut run_training(const RunConfig& cfg, const std::string& out_dir = "",
                    bool dump = false) {
  const auto t0 = Clock::now();
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.dump_trajectories = dump;
  RunOut r;
  r.tr = train(cfg, opts);
  if (r.tr.aborted) throw std::runtime_error("training aborted: " + r.tr.abort_reason);
  const Environment env(cfg.env, cfg.horizon);
  const int episodes = cfg.eval_episodes > 0 ? cfg.eval_episodes : 16;
  r.eval_success =
      evaluate(env, r.tr.params, cfg, episodes, cfg.seed ^ 0x5eedull).success_rate;
  r.seconds = seconds_since(t0);
  return r;
}

// From-scratch farthest-point reference: recompute every worst-case
// similarity each round instead of keeping running maxima, so it shares no
// code shape with the production routine.
std::vector<size_t> fps_reference(const std::vector<std::vector<double>>& emb,
                                  size_t n) {
  const size_t dim = emb[0].size();
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < dim; ++i) s += a[i] * b[i];
    return s;
  };
  std::vector<double> centroid(dim, 0.0);
  for (const auto& e : emb)
    for (size_t i = 0; i < dim; ++i) centroid[i] += e[i];
  for (double& x : centroid) x /= double(emb.size());

  std::vector<size_t> sel;
  std::vector<bool> taken(emb.size(), false);
  size_t seed = 0;
  double best = -1e300;
  for (size_t i = 0; i < emb.size(); ++i) {
    const double s = dot(emb[i], centroid);
    if (s > best) { best = s; seed = i; }
  }
  sel.push_back(seed);
  taken[seed] = true;
  while (sel.size() < n) {
    size_t pick = emb.size();
    double low = 1e300;
    for (size_t i = 0; i < emb.size(); ++i) {
      if (taken[i]) continue;
      double worst = -1e300;
      for (size_t s : sel) worst = std::max(worst, dot(emb[i], emb[s]));
      if (worst < low) { low = worst; pick = i; }
    }
    sel.push_back(pick);
    taken[pick] = true;
  }
  return sel;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config_dir = argc > 1 ? argv[1] : "configs";
  const fs::path work = fs::temp_directory_path() / "strata-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  RunConfig strata_cfg, flat_cfg;
  try {
    strata_cfg = load_cfg(config_dir / "strata-chainkey.cfg");
    flat_cfg = load_cfg(config_dir / "flat-chainkey.cfg");
  } catch (const std::exception& e) {
    std::printf("[FAIL] setup: %s\n", e.what());
    return 10;
  }

  // ---- criterion 1: analytic gradient vs central finite differences ----
  try {
    const auto t0 = Clock::now();
    const GradCheckResult gc = grad_check(50, 20260816ull, 1e-5, /*feature_dim=*/16);
    const double sec = seconds_since(t0);
    report(1, gc.max_rel_err < 1e-4 && sec < 60.0,
           "analytic gradient matches finite differences",
           "max_rel_err=" + fmt("%.3g", gc.max_rel_err) + " over " +
               std::to_string(gc.trials) + " small batches (dim 16, 2x2 groups), " +
               std::to_string(gc.coords_checked) + " coordinates, " +
               fmt("%.1f", sec) + "s (need <1e-4 and <60s)");
  } catch (const std::exception& e) {
    report(1, false, "analytic gradient matches finite differences", e.what());
  }

  // ---- criterion 2: advantage normalization invariants ----
  try {
    Rng rng = derive_stream(99, {2});
    double worst_mean = 0.0, worst_std = 0.0, worst_affine = 0.0;
    for (int g = 0; g < 1000; ++g) {
      const size_t size = 2 + rng.next_below(31);
      std::vector<double> r(size);
      bool degenerate = true;
      while (degenerate) {
        for (double& x : r) x = 4.0 * rng.next_double() - 2.0;
        for (double x : r) degenerate = degenerate && x == r[0];
      }
      const std::vector<double> a = normalize_group(r);
      double mean = 0.0, var = 0.0;
      for (double x : a) mean += x;
      mean /= double(size);
      for (double x : a) var += (x - mean) * (x - mean);
      var /= double(size);
      worst_mean = std::max(worst_mean, std::fabs(mean));
      worst_std = std::max(worst_std, std::fabs(std::sqrt(var) - 1.0));

      const double scale = 0.1 + 3.0 * rng.next_double();
      const double shift = 10.0 * rng.next_double() - 5.0;
      std::vector<double> r2(size);
      for (size_t i = 0; i < size; ++i) r2[i] = scale * r[i] + shift;
      const std::vector<double> a2 = normalize_group(r2);
      for (size_t i = 0; i < size; ++i)
        worst_affine = std::max(worst_affine, std::fabs(a2[i] - a[i]));
    }
    report(2, worst_mean < 1e-9 && worst_std < 1e-6 && worst_affine < 1e-9,
           "group normalization is centered, unit-scale, affine-invariant",
           "1000 groups: |mean|<=" + fmt("%.3g", worst_mean) + ", |std-1|<=" +
               fmt("%.3g", worst_std) + ", affine drift<=" + fmt("%.3g", worst_affine));
  } catch (const std::exception& e) {
    report(2, false, "group normalization invariants", e.what());
  }

  // ---- shared training runs (feed criteria 3 and 6-10) ----
  std::vector<RunOut> strata_runs, flat_runs, sigma1_runs, kappa0_runs;
  const fs::path dump_dir = work / "dumps";
  fs::create_directories(dump_dir);
  double dominance_seconds = 0.0;
  std::string run_error;
  try {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      RunConfig c = strata_cfg;
      c.seed = seed;
      // seed 1 also writes per-step rollout dumps for the record audit
      const bool dump = seed == 1;
      strata_runs.push_back(
          run_training(c, dump ? dump_dir.string() : std::string(), dump));
      dominance_seconds += strata_runs.back().seconds;
    }
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      RunConfig c = flat_cfg;
      c.seed = seed;
      flat_runs.push_back(run_training(c));
      dominance_seconds += flat_runs.back().seconds;
    }
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      RunConfig c = strata_cfg;
      c.seed = seed;
      c.sigma = 1.0;  // no oversampling: selection becomes a pass-through
      sigma1_runs.push_back(run_training(c));
    }
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      RunConfig c = strata_cfg;
      c.seed = seed;
      c.kappa = 0.0;  // judge runs but its findings carry no weight
      kappa0_runs.push_back(run_training(c));
    }
  } catch (const std::exception& e) {
    run_error = e.what();
  }

  // ---- criterion 3: reward formula pins + emitted range ----
  try {
    const double p_free = length_penalty(8, 16, 0.5);    // at the free limit
    const double p_full = length_penalty(16, 16, 0.5);   // at the hard limit
    const double p_over = length_penalty(17, 16, 0.5);   // beyond the limit
    bool pins = p_free == 0.0 && p_full == -1.0 && p_over == -1.0;

    Rng rng = derive_stream(99, {3});
    double worst_mean_gap = 0.0;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> r(1 + rng.next_below(16));
      double mean = 0.0;
      for (double& x : r) { x = 2.0 * rng.next_double() - 1.0; mean += x; }
      mean /= double(r.size());
      worst_mean_gap =
          std::max(worst_mean_gap, std::fabs(top_delta_reward(r, 1.0) - mean));
    }

    bool range_ok = !strata_runs.empty();
    double lo = 0.0, hi = 0.0;
    for (const auto* runs : {&strata_runs, &flat_runs, &sigma1_runs, &kappa0_runs})
      for (const RunOut& r : *runs) {
        lo = std::min(lo, r.tr.reward_min);
        hi = std::max(hi, r.tr.reward_max);
        range_ok = range_ok && r.tr.reward_min >= -1.0 && r.tr.reward_max <= 1.0;
      }
    report(3, pins && worst_mean_gap <= 1e-12 && range_ok,
           "reward formulas match hand values and stay clipped",
           "length penalty (8,16,17 of 16 @ 0.5) = " + fmt("%.1f", p_free) + "/" +
               fmt("%.1f", p_full) + "/" + fmt("%.1f", p_over) +
               ", full-share mean gap<=" + fmt("%.2g", worst_mean_gap) +
               ", emitted totals in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) +
               "] across " + std::to_string(4 * 3) + " full runs" +
               (run_error.empty() ? "" : " (runs failed: " + run_error + ")"));
  } catch (const std::exception& e) {
    report(3, false, "reward formula pins", e.what());
  }

  // ---- criterion 4: selection matches the from-scratch reference ----
  try {
    Rng rng = derive_stream(99, {4});
    bool equal = true;
    double worst_call = 0.0;
    for (int t = 0; t < 100; ++t) {
      const size_t count = t == 0 ? 512 : 2 + rng.next_below(511);
      const size_t dim = 64;
      std::vector<std::vector<double>> emb(count, std::vector<double>(dim));
      for (auto& e : emb) {
        double norm = 0.0;
        for (double& x : e) { x = 2.0 * rng.next_double() - 1.0; norm += x * x; }
        norm = std::sqrt(norm);
        if (norm > 0) for (double& x : e) x /= norm;
      }
      const size_t n = 1 + rng.next_below(std::min<uint64_t>(count, 32));
      const auto t0 = Clock::now();
      const std::vector<size_t> got = fps_select(emb, n);
      worst_call = std::max(worst_call, seconds_since(t0));
      equal = equal && got == fps_reference(emb, n);
    }
    report(4, equal && worst_call < 0.050,
           "diversity selection equals the independent reference",
           std::string("100 pools up to 512x64: ") +
               (equal ? "all index sequences identical" : "MISMATCH") +
               ", slowest call " + fmt("%.1f", worst_call * 1e3) + "ms (need <50ms)");
  } catch (const std::exception& e) {
    report(4, false, "diversity selection equivalence", e.what());
  }

  // ---- criterion 5: output-format parsers ----
  try {
    const Vocab& v = Vocab::instance();
    bool ok = true;
    std::string note;

    const ParsedJudgment j1 =
        parse_judgment("verdict follows <judgment>[2, 5]</judgment>", 8);
    ok = ok && j1.ok && j1.flags == std::vector<int>{2, 5};
    const ParsedJudgment j2 = parse_judgment("<judgment>[]</judgment>", 8);
    ok = ok && j2.ok && j2.flags.empty();
    ok = ok && !parse_judgment("no tags here", 8).ok;
    ok = ok && !parse_judgment("<judgment>[x]</judgment>", 8).ok;
    ok = ok && !parse_judgment("<judgment>[9]</judgment>", 8).ok;   // beyond last step
    ok = ok && !parse_judgment("<judgment>[0]</judgment>", 8).ok;   // steps are 1-based

    const ParsedStrategy s1 =
        parse_strategy("<strategy>take the short route</strategy>");
    ok = ok && s1.ok && v.detokenize(s1.body) == "take the short route";
    const ParsedStrategy s2 = parse_strategy(
        "<strategy>go left</strategy> then <strategy>go right</strategy>");
    ok = ok && s2.ok && v.detokenize(s2.body) == "go right";
    ok = ok && !parse_strategy("<strategy>never closed").ok;
    ok = ok && !parse_strategy("bare words").ok;

    report(5, ok, "tagged-output parsers accept the canon and reject the malformed",
           ok ? "judgment [2,5]/[] and strategy extraction, last-pair rule, and "
                "all declared error cases behave"
              : "a parser case diverged");
  } catch (const std::exception& e) {
    report(5, false, "tagged-output parsers", e.what());
  }

  // ---- criterion 6: bit-identical reruns ----
  try {
    RunConfig c = strata_cfg;
    c.seed = 7;
    c.training_steps = 40;
    c.checkpoint_every = 40;
    const fs::path a = work / "det-a", b = work / "det-b";
    fs::create_directories(a);
    fs::create_directories(b);
    TrainOptions oa; oa.out_dir = a.string();
    TrainOptions ob; ob.out_dir = b.string();
    const TrainResult ra = train(c, oa);
    const TrainResult rb = train(c, ob);
    const bool metrics_equal =
        slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl");
    const bool ckpt_equal = slurp(a / "ckpt-40.bin") == slurp(b / "ckpt-40.bin");
    const bool params_equal = ra.params.w == rb.params.w;
    report(6, metrics_equal && ckpt_equal && params_equal,
           "identical config and seed reproduce bit-identical outputs",
           std::string("metrics ") + (metrics_equal ? "equal" : "DIFFER") +
               ", final checkpoint " + (ckpt_equal ? "equal" : "DIFFER") +
               ", in-memory parameters " + (params_equal ? "equal" : "DIFFER"));
  } catch (const std::exception& e) {
    report(6, false, "bit-identical reruns", e.what());
  }

  // ---- criterion 7: hierarchical runs learn, and beat the flat baseline ----
  try {
    if (!run_error.empty()) throw std::runtime_error(run_error);
    const double med_strata = median3(strata_runs[0].eval_success,
                                      strata_runs[1].eval_success,
                                      strata_runs[2].eval_success);
    const double med_flat = median3(flat_runs[0].eval_success,
                                    flat_runs[1].eval_success,
                                    flat_runs[2].eval_success);
    report(7,
           med_strata >= 0.90 && med_strata > med_flat &&
               dominance_seconds < 600.0,
           "hierarchical training solves chain-key and beats the flat baseline",
           "median eval success over seeds 1-3: hierarchical=" +
               fmt("%.3f", med_strata) + " (need >=0.90), flat=" +
               fmt("%.3f", med_flat) + " at matched 32-rollout budget; six runs took " +
               fmt("%.0f", dominance_seconds) + "s (need <600s)");
  } catch (const std::exception& e) {
    report(7, false, "hierarchical learning dominance", e.what());
  }

  // ---- criterion 8: ablation directions ----
  try {
    if (!run_error.empty()) throw std::runtime_error(run_error);
    const double med_strata = median3(strata_runs[0].eval_success,
                                      strata_runs[1].eval_success,
                                      strata_runs[2].eval_success);
    const double med_sigma1 = median3(sigma1_runs[0].eval_success,
                                      sigma1_runs[1].eval_success,
                                      sigma1_runs[2].eval_success);
    const double med_kappa0 = median3(kappa0_runs[0].eval_success,
                                      kappa0_runs[1].eval_success,
                                      kappa0_runs[2].eval_success);
    report(8, med_strata >= med_sigma1 && med_strata >= med_kappa0,
           "oversampled selection and the judge never hurt",
           "median success: full=" + fmt("%.3f", med_strata) + " vs no-oversampling=" +
               fmt("%.3f", med_sigma1) + " vs no-judge-penalty=" + fmt("%.3f", med_kappa0));
  } catch (const std::exception& e) {
    report(8, false, "ablation directions", e.what());
  }

  // ---- criterion 9: judging passes never carry reward ----
  try {
    if (!run_error.empty()) throw std::runtime_error(run_error);
    // audit every dumped step of the seed-1 run: records come only from
    // strategy scoring or action steps
    size_t dumps_seen = 0, records_seen = 0;
    bool sources_ok = true;
    for (int step = 1; step <= strata_cfg.training_steps; ++step) {
      const fs::path p = dump_dir / ("step-" + std::to_string(step) + ".bin");
      if (!fs::exists(p)) continue;
      const BatchDump d = read_dump(p.string());
      ++dumps_seen;
      for (const RewardRecord& r : d.reward_records) {
        ++records_seen;
        sources_ok = sources_ok && (r.source == RewardSource::kStrategy ||
                                    r.source == RewardSource::kAction);
      }
    }
    const bool oracle_silent = strata_runs[0].tr.stats.judge_tokens == 0;

    // the self-judging configuration spends tokens on judgments, yet the
    // record set keeps the same shape: nothing rewards the judgment text
    RunConfig jc = strata_cfg;
    jc.judge = "policy";
    const Environment env(jc.env, jc.horizon);
    const PolicyParams behaviour = init_params(jc).as_role(ParamRole::kOld);
    CollectStats with_judge;
    const HierarchicalBatch hb =
        collect_task(env, behaviour, jc, 4242, 777, &with_judge);
    RunConfig oc = strata_cfg;
    CollectStats with_oracle;
    const HierarchicalBatch ob =
        collect_task(env, behaviour, oc, 4242, 777, &with_oracle);
    bool policy_ok = with_judge.judge_tokens > 0 && with_oracle.judge_tokens == 0 &&
                     hb.reward_records.size() == ob.reward_records.size();
    for (const RewardRecord& r : hb.reward_records)
      policy_ok = policy_ok && (r.source == RewardSource::kStrategy ||
                                r.source == RewardSource::kAction);

    report(9, dumps_seen > 0 && sources_ok && oracle_silent && policy_ok,
           "no reward record is ever attributed to a judging pass",
           std::to_string(records_seen) + " records across " +
               std::to_string(dumps_seen) +
               " dumped steps are all strategy/action-sourced; self-judging run spent " +
               std::to_string(with_judge.judge_tokens) +
               " judge tokens and changed no record shape");
  } catch (const std::exception& e) {
    report(9, false, "no reward attribution to judging", e.what());
  }

  // ---- criterion 10: strategy/judge overhead share of sampled tokens ----
  try {
    if (!run_error.empty()) throw std::runtime_error(run_error);
    const CollectStats& s = strata_runs[0].tr.stats;
    const double overhead = double(s.strategy_tokens + s.judge_tokens);
    const double total = double(s.total_tokens());
    const double ratio = total > 0 ? overhead / total : 1.0;
    report(10, ratio < 0.15,
           "strategy, selection, and judging stay under 15% of sampled tokens",
           "strategy=" + std::to_string(s.strategy_tokens) + " + judge=" +
               std::to_string(s.judge_tokens) + " of " +
               std::to_string(s.total_tokens()) + " sampled tokens = " +
               fmt("%.1f", ratio * 100.0) +
               "% (selection samples no tokens; its arithmetic is counted separately as " +
               std::to_string(s.embed_ops + s.fps_ops) + " multiply-adds)");
  } catch (const std::exception& e) {
    report(10, false, "sampling-cost accounting", e.what());
  }

  std::printf("%d of 10 criteria failed\n", g_failures);
  return g_failures;
}
