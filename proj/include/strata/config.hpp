#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "strata/vocab.hpp"

namespace strata {

// All run settings in one value type. Defaults are the desk-scale mirror of
// the reference setup: N=4 strategies, M=8 rollouts, 8x strategy
// oversampling, top-50% strategy scoring, asymmetric clip (0.2 / 0.28),
// judge penalty 0.1, 150 training steps.
struct RunConfig {
  // [env]
  std::string env = "chain-key";
  int horizon = 0;  // 0 = environment default

  // [policy]
  int v = 0;        // vocabulary size; 0 = use the built-in vocabulary
  int d = 4096;     // hashed feature buckets
  int d_embed = 64; // strategy embedding buckets
  double temperature = 1.0;
  double eval_temperature = 0.7;
  int max_strategy_tokens = 12;
  int max_action_tokens = 8;
  double init_scale = 0.0;  // 0 = uniform policy at start

  // [rewards]
  double delta = 0.5;    // top fraction of rollouts scored per strategy
  double lambda = 0.5;   // free-length fraction
  double kappa = 0.1;    // per-step judge penalty
  int l_total = 16;      // response token budget
  std::string judge = "oracle";  // oracle | policy | off

  // [trainer]
  std::string mode = "strata";  // strata | flat-grpo
  int n = 4;
  int m = 8;
  double sigma = 8.0;    // oversampling factor, candidates = round(sigma*n)
  double beta = 0.001;   // KL weight
  double eps_low = 0.2;
  double eps_high = 0.28;
  double learning_rate = 0.1;
  double weight_decay = 0.01;  // adaptive optimizer only
  std::string optimizer = "sgd";  // sgd | adaptive
  int updates_per_collection = 1;
  std::string normalization = "per-trajectory";  // per-trajectory | per-step
  bool mean_over_groups = false;
  int batch_size = 16;
  int training_steps = 150;
  int eval_episodes = 16;   // rolling eval per training step
  int checkpoint_every = 10;
  uint64_t seed = 1;

  bool operator==(const RunConfig& o) const {
    return env == o.env && horizon == o.horizon && v == o.v && d == o.d &&
           d_embed == o.d_embed && temperature == o.temperature &&
           eval_temperature == o.eval_temperature &&
           max_strategy_tokens == o.max_strategy_tokens &&
           max_action_tokens == o.max_action_tokens &&
           init_scale == o.init_scale && delta == o.delta &&
           lambda == o.lambda && kappa == o.kappa && l_total == o.l_total &&
           judge == o.judge && mode == o.mode && n == o.n && m == o.m &&
           sigma == o.sigma && beta == o.beta && eps_low == o.eps_low &&
           eps_high == o.eps_high && learning_rate == o.learning_rate &&
           weight_decay == o.weight_decay && optimizer == o.optimizer &&
           updates_per_collection == o.updates_per_collection &&
           normalization == o.normalization &&
           mean_over_groups == o.mean_over_groups &&
           batch_size == o.batch_size && training_steps == o.training_steps &&
           eval_episodes == o.eval_episodes &&
           checkpoint_every == o.checkpoint_every && seed == o.seed;
  }

  int vocab_size() const { return v > 0 ? v : Vocab::instance().size(); }
  int candidate_count() const { return int(std::llround(sigma * n)); }
};

// Returns a list of human-readable problems, empty when the config is fine.
inline std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errs;
  auto bad = [&](const std::string& msg) { errs.push_back(msg); };

  if (c.env != "chain-key" && c.env != "grid-quest")
    bad("env: unknown environment '" + c.env + "'");
  if (c.horizon < 0) bad("horizon: must be >= 0");
  if (c.v != 0 && c.v != Vocab::instance().size())
    bad("v: must be 0 or the built-in vocabulary size " +
        std::to_string(Vocab::instance().size()));
  if (c.d < 1) bad("d: must be >= 1");
  if (c.d_embed < 1) bad("d_embed: must be >= 1");
  if (!(c.temperature > 0)) bad("temperature: must be > 0");
  if (!(c.eval_temperature > 0)) bad("eval_temperature: must be > 0");
  if (c.max_strategy_tokens < 1) bad("max_strategy_tokens: must be >= 1");
  if (c.max_action_tokens < 1) bad("max_action_tokens: must be >= 1");
  if (c.max_strategy_tokens > c.l_total)
    bad("max_strategy_tokens: must be <= l_total");
  if (c.max_action_tokens > c.l_total)
    bad("max_action_tokens: must be <= l_total");
  if (!(c.delta > 0.0 && c.delta <= 1.0)) bad("delta: must be in (0, 1]");
  if (!(c.lambda >= 0.0 && c.lambda < 1.0)) bad("lambda: must be in [0, 1)");
  if (c.kappa < 0) bad("kappa: must be >= 0");
  if (c.l_total < 1) bad("l_total: must be >= 1");
  if (c.judge != "oracle" && c.judge != "policy" && c.judge != "off")
    bad("judge: must be oracle, policy, or off");
  if (c.mode != "strata" && c.mode != "flat-grpo")
    bad("mode: must be strata or flat-grpo");
  if (c.n < 1) bad("n: must be >= 1");
  if (c.m < 1) bad("m: must be >= 1");
  if (!(c.sigma >= 1.0)) bad("sigma: must be >= 1");
  if (c.beta < 0) bad("beta: must be >= 0");
  if (!(c.eps_low > 0)) bad("eps_low: must be > 0");
  if (!(c.eps_high > 0)) bad("eps_high: must be > 0");
  if (c.learning_rate < 0) bad("learning_rate: must be >= 0");
  if (c.weight_decay < 0) bad("weight_decay: must be >= 0");
  if (c.optimizer != "sgd" && c.optimizer != "adaptive")
    bad("optimizer: must be sgd or adaptive");
  if (c.updates_per_collection < 1) bad("updates_per_collection: must be >= 1");
  if (c.normalization != "per-trajectory" && c.normalization != "per-step")
    bad("normalization: must be per-trajectory or per-step");
  if (c.batch_size < 1) bad("batch_size: must be >= 1");
  if (c.training_steps < 1) bad("training_steps: must be >= 1");
  if (c.eval_episodes < 0) bad("eval_episodes: must be >= 0");
  if (c.checkpoint_every < 1) bad("checkpoint_every: must be >= 1");
  return errs;
}

namespace detail {

inline std::string fmt_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Plain-text config: [section] headers, key=value lines, '#' comments.
inline std::string render_config(const RunConfig& c) {
  using detail::fmt_double;
  std::ostringstream out;
  out << "[env]\n"
      << "env=" << c.env << "\n"
      << "horizon=" << c.horizon << "\n\n"
      << "[policy]\n"
      << "v=" << c.v << "\n"
      << "d=" << c.d << "\n"
      << "d_embed=" << c.d_embed << "\n"
      << "temperature=" << fmt_double(c.temperature) << "\n"
      << "eval_temperature=" << fmt_double(c.eval_temperature) << "\n"
      << "max_strategy_tokens=" << c.max_strategy_tokens << "\n"
      << "max_action_tokens=" << c.max_action_tokens << "\n"
      << "init_scale=" << fmt_double(c.init_scale) << "\n\n"
      << "[rewards]\n"
      << "delta=" << fmt_double(c.delta) << "\n"
      << "lambda=" << fmt_double(c.lambda) << "\n"
      << "kappa=" << fmt_double(c.kappa) << "\n"
      << "l_total=" << c.l_total << "\n"
      << "judge=" << c.judge << "\n\n"
      << "[trainer]\n"
      << "mode=" << c.mode << "\n"
      << "n=" << c.n << "\n"
      << "m=" << c.m << "\n"
      << "sigma=" << fmt_double(c.sigma) << "\n"
      << "beta=" << fmt_double(c.beta) << "\n"
      << "eps_low=" << fmt_double(c.eps_low) << "\n"
      << "eps_high=" << fmt_double(c.eps_high) << "\n"
      << "learning_rate=" << fmt_double(c.learning_rate) << "\n"
      << "weight_decay=" << fmt_double(c.weight_decay) << "\n"
      << "optimizer=" << c.optimizer << "\n"
      << "updates_per_collection=" << c.updates_per_collection << "\n"
      << "normalization=" << c.normalization << "\n"
      << "mean_over_groups=" << (c.mean_over_groups ? "true" : "false") << "\n"
      << "batch_size=" << c.batch_size << "\n"
      << "training_steps=" << c.training_steps << "\n"
      << "eval_episodes=" << c.eval_episodes << "\n"
      << "checkpoint_every=" << c.checkpoint_every << "\n"
      << "seed=" << c.seed << "\n";
  return out.str();
}

// Parses config text over the defaults in `base`. Unknown keys, bad values
// and misplaced sections all land in `errors`; the config is usable only
// when errors stays empty.
inline RunConfig parse_config(const std::string& text,
                              std::vector<std::string>& errors,
                              RunConfig base = RunConfig{}) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;

  auto to_int = [&](const std::string& v, int& dst, const std::string& key) {
    try {
      size_t pos = 0;
      long val = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing junk");
      dst = int(val);
    } catch (...) {
      errors.push_back(key + ": not an integer: '" + v + "'");
    }
  };
  auto to_u64 = [&](const std::string& v, uint64_t& dst, const std::string& key) {
    try {
      size_t pos = 0;
      unsigned long long val = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing junk");
      dst = val;
    } catch (...) {
      errors.push_back(key + ": not an unsigned integer: '" + v + "'");
    }
  };
  auto to_double = [&](const std::string& v, double& dst, const std::string& key) {
    try {
      size_t pos = 0;
      double val = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing junk");
      dst = val;
    } catch (...) {
      errors.push_back(key + ": not a number: '" + v + "'");
    }
  };
  auto to_bool = [&](const std::string& v, bool& dst, const std::string& key) {
    if (v == "true" || v == "1") dst = true;
    else if (v == "false" || v == "0") dst = false;
    else errors.push_back(key + ": not a boolean: '" + v + "'");
  };

  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back("line " + std::to_string(lineno) + ": unterminated section header");
        continue;
      }
      section = line.substr(1, line.size() - 2);
      if (section != "env" && section != "policy" && section != "rewards" &&
          section != "trainer")
        errors.push_back("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    std::string skey = section + "." + key;

    if (skey == "env.env") base.env = val;
    else if (skey == "env.horizon") to_int(val, base.horizon, skey);
    else if (skey == "policy.v") to_int(val, base.v, skey);
    else if (skey == "policy.d") to_int(val, base.d, skey);
    else if (skey == "policy.d_embed") to_int(val, base.d_embed, skey);
    else if (skey == "policy.temperature") to_double(val, base.temperature, skey);
    else if (skey == "policy.eval_temperature") to_double(val, base.eval_temperature, skey);
    else if (skey == "policy.max_strategy_tokens") to_int(val, base.max_strategy_tokens, skey);
    else if (skey == "policy.max_action_tokens") to_int(val, base.max_action_tokens, skey);
    else if (skey == "policy.init_scale") to_double(val, base.init_scale, skey);
    else if (skey == "rewards.delta") to_double(val, base.delta, skey);
    else if (skey == "rewards.lambda") to_double(val, base.lambda, skey);
    else if (skey == "rewards.kappa") to_double(val, base.kappa, skey);
    else if (skey == "rewards.l_total") to_int(val, base.l_total, skey);
    else if (skey == "rewards.judge") base.judge = val;
    else if (skey == "trainer.mode") base.mode = val;
    else if (skey == "trainer.n") to_int(val, base.n, skey);
    else if (skey == "trainer.m") to_int(val, base.m, skey);
    else if (skey == "trainer.sigma") to_double(val, base.sigma, skey);
    else if (skey == "trainer.beta") to_double(val, base.beta, skey);
    else if (skey == "trainer.eps_low") to_double(val, base.eps_low, skey);
    else if (skey == "trainer.eps_high") to_double(val, base.eps_high, skey);
    else if (skey == "trainer.learning_rate") to_double(val, base.learning_rate, skey);
    else if (skey == "trainer.weight_decay") to_double(val, base.weight_decay, skey);
    else if (skey == "trainer.optimizer") base.optimizer = val;
    else if (skey == "trainer.updates_per_collection") to_int(val, base.updates_per_collection, skey);
    else if (skey == "trainer.normalization") base.normalization = val;
    else if (skey == "trainer.mean_over_groups") to_bool(val, base.mean_over_groups, skey);
    else if (skey == "trainer.batch_size") to_int(val, base.batch_size, skey);
    else if (skey == "trainer.training_steps") to_int(val, base.training_steps, skey);
    else if (skey == "trainer.eval_episodes") to_int(val, base.eval_episodes, skey);
    else if (skey == "trainer.checkpoint_every") to_int(val, base.checkpoint_every, skey);
    else if (skey == "trainer.seed") to_u64(val, base.seed, skey);
    else errors.push_back("line " + std::to_string(lineno) + ": unknown key '" + skey + "'");
  }
  return base;
}

}  // namespace strata
