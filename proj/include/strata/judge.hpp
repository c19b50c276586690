#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <vector>

#include "strata/config.hpp"
#include "strata/env.hpp"
#include "strata/policy.hpp"
#include "strata/types.hpp"
#include "strata/vocab.hpp"

namespace strata {

struct ParsedStrategy {
  bool ok = false;
  std::string error;
  TokenSeq body;
};

// Extracts the content of the last complete <strategy>...</strategy> pair.
// Unparseable output is an error, not a crash: the caller keeps the sample
// and lets the format penalty do the teaching.
inline ParsedStrategy parse_strategy(const std::string& text) {
  ParsedStrategy out;
  const std::string open = "<strategy>", close = "</strategy>";
  const size_t close_at = text.rfind(close);
  if (close_at == std::string::npos) {
    out.error = "missing </strategy> tag";
    return out;
  }
  const size_t open_at = text.rfind(open, close_at);
  if (open_at == std::string::npos) {
    out.error = "missing <strategy> tag";
    return out;
  }
  const size_t begin = open_at + open.size();
  const std::string content = text.substr(begin, close_at - begin);
  out.body = Vocab::instance().tokenize(content);
  if (out.body.empty()) {
    out.error = "empty strategy body";
    return out;
  }
  out.ok = true;
  return out;
}

struct ParsedJudgment {
  bool ok = false;
  std::vector<std::string> errors;
  std::vector<int> flags;  // sorted, deduplicated, 1-based
};

// Extracts "[i, j, ...]" from the last <judgment>...</judgment> pair.
// Whitespace anywhere is fine; an empty list means no step was flagged.
// Indices must land in [1, max_step].
inline ParsedJudgment parse_judgment(const std::string& text, int max_step) {
  ParsedJudgment out;
  const std::string open = "<judgment>", close = "</judgment>";
  const size_t close_at = text.rfind(close);
  if (close_at == std::string::npos) {
    out.errors.push_back("missing </judgment> tag");
    return out;
  }
  const size_t open_at = text.rfind(open, close_at);
  if (open_at == std::string::npos) {
    out.errors.push_back("missing <judgment> tag");
    return out;
  }
  const size_t begin = open_at + open.size();
  std::string body = text.substr(begin, close_at - begin);

  size_t i = 0;
  auto skip_ws = [&] {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
  };
  skip_ws();
  if (i >= body.size() || body[i] != '[') {
    out.errors.push_back("expected '[' in judgment");
    return out;
  }
  ++i;
  std::set<int> flags;
  bool expect_value = false;  // true after a comma
  while (true) {
    skip_ws();
    if (i >= body.size()) {
      out.errors.push_back("unterminated judgment list");
      return out;
    }
    if (body[i] == ']' && !expect_value) {
      ++i;
      break;
    }
    size_t start = i;
    while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
    if (start == i) {
      size_t junk_end = i;
      while (junk_end < body.size() && body[junk_end] != ',' && body[junk_end] != ']' &&
             !std::isspace(static_cast<unsigned char>(body[junk_end])))
        ++junk_end;
      out.errors.push_back("non-integer step index '" +
                           body.substr(start, junk_end - start) + "'");
      return out;
    }
    const int idx = std::stoi(body.substr(start, i - start));
    if (idx < 1 || idx > max_step)
      out.errors.push_back("step index " + std::to_string(idx) + " outside [1, " +
                           std::to_string(max_step) + "]");
    else
      flags.insert(idx);
    skip_ws();
    if (i < body.size() && body[i] == ',') {
      ++i;
      expect_value = true;
      continue;
    }
    expect_value = false;
  }
  skip_ws();
  if (i < body.size()) {
    out.errors.push_back("trailing content after ']'");
    return out;
  }
  if (!out.errors.empty()) return out;
  out.ok = true;
  out.flags.assign(flags.begin(), flags.end());
  return out;
}

namespace detail {

inline std::set<TokenId> lexicon_mentions(const std::vector<TokenId>& tokens,
                                          const std::vector<TokenId>& lexicon) {
  std::set<TokenId> out;
  for (TokenId t : tokens)
    for (TokenId l : lexicon)
      if (t == l) out.insert(t);
  return out;
}

}  // namespace detail

// Ground-truth judge. A step is flagged when it is malformed, or when it
// neither advanced the task (shortest solve distance did not strictly drop)
// nor followed the strategy (shares no route-lexicon token with the
// strategy's declared set). Progress excuses deviation; loyalty excuses
// dithering; doing neither earns the flag.
inline std::vector<int> oracle_judge(const Environment& env,
                                     const std::vector<TokenId>& strategy_body,
                                     const Trajectory& traj) {
  const std::set<TokenId> declared =
      detail::lexicon_mentions(strategy_body, env.spec().route_lexicon);
  std::vector<int> flags;
  EnvState state = env.reset(traj.task_seed);
  for (const StepRecord& step : traj.steps) {
    const int d_before = env.solve_distance(state);
    StepResult res = env.step(state, step.action);
    if (res.parse_ok != step.parse_ok)
      throw std::logic_error("oracle_judge: replay diverged from the recorded run");
    const int d_after = env.solve_distance(res.state);
    state = res.state;

    if (!step.parse_ok) {
      flags.push_back(step.step_index);
      continue;
    }
    const bool progressed = d_before > 0 && d_after >= 0 && d_after < d_before;
    const std::set<TokenId> mentioned =
        detail::lexicon_mentions(step.action.tokens, env.spec().route_lexicon);
    bool follows = false;
    for (TokenId t : mentioned) follows = follows || declared.count(t) > 0;
    if (!progressed && !follows) flags.push_back(step.step_index);
  }
  return flags;
}

inline constexpr const char* kJudgeFrame =
    "review the strategy and the steps then flag doubtful step numbers as "
    "<judgment> [ 2 , 5 ] </judgment> or <judgment> [ ] </judgment> if all fine";

// Self-judgment by the policy itself: sample a judgment response, parse it,
// and treat anything unparseable as an empty flag set. The sample is counted
// but never rewarded.
inline std::vector<int> policy_judge(const PolicyParams& behaviour,
                                     const std::vector<TokenId>& strategy_body,
                                     const Trajectory& traj, const RunConfig& cfg,
                                     Rng& rng, CollectStats* stats = nullptr) {
  const Vocab& vocab = Vocab::instance();
  std::string obs = std::string(kJudgeFrame) + " strategy " +
                    vocab.detokenize(TokenSeq{strategy_body}) + " steps";
  for (const StepRecord& s : traj.steps)
    obs += " " + std::to_string(s.step_index) + " " + vocab.detokenize(s.action);

  uint64_t* ops = stats ? &stats->sampling_ops : nullptr;
  const SampledSeq sample =
      sample_sequence(Channel::kJudge, behaviour, strategy_body, obs, rng,
                      cfg.temperature, cfg.l_total, ops);
  if (stats) stats->judge_tokens += sample.seq.size();

  const ParsedJudgment parsed =
      parse_judgment(vocab.detokenize(sample.seq), int(traj.steps.size()));
  return parsed.ok ? parsed.flags : std::vector<int>{};
}

}  // namespace strata
