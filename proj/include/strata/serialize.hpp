#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "strata/types.hpp"

namespace strata {

using json = nlohmann::ordered_json;

// -- json mappings -- //

inline json to_json(const TokenSeq& s) { return json(s.tokens); }
inline TokenSeq tokenseq_from_json(const json& j) {
  TokenSeq s;
  s.tokens = j.get<std::vector<TokenId>>();
  return s;
}

inline json to_json(const StepRecord& s) {
  return json{{"state_text", s.state_text},
              {"action", to_json(s.action)},
              {"parse_ok", s.parse_ok},
              {"step_index", s.step_index},
              {"logprobs_old", s.logprobs_old}};
}
inline StepRecord step_from_json(const json& j) {
  StepRecord s;
  s.state_text = j.at("state_text").get<std::string>();
  s.action = tokenseq_from_json(j.at("action"));
  s.parse_ok = j.at("parse_ok").get<bool>();
  s.step_index = j.at("step_index").get<int>();
  s.logprobs_old = j.at("logprobs_old").get<std::vector<double>>();
  return s;
}

inline json to_json(const Trajectory& t) {
  json steps = json::array();
  for (const StepRecord& s : t.steps) steps.push_back(to_json(s));
  return json{{"task_seed", t.task_seed},
              {"strategy_body", to_json(t.strategy.body)},
              {"strategy_embedding", t.strategy.embedding},
              {"steps", steps},
              {"terminated", t.terminated},
              {"success_score", t.success_score},
              {"outcome_reward", t.outcome_reward}};
}
inline Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.task_seed = j.at("task_seed").get<uint64_t>();
  t.strategy.body = tokenseq_from_json(j.at("strategy_body"));
  t.strategy.embedding = j.at("strategy_embedding").get<std::vector<double>>();
  for (const json& s : j.at("steps")) t.steps.push_back(step_from_json(s));
  t.terminated = j.at("terminated").get<bool>();
  t.success_score = j.at("success_score").get<double>();
  t.outcome_reward = j.at("outcome_reward").get<double>();
  return t;
}

inline json to_json(const StrategySample& s) {
  return json{{"raw", to_json(s.raw)},
              {"prompt_text", s.prompt_text},
              {"logprobs_old", s.logprobs_old},
              {"parse_ok", s.parse_ok},
              {"body", to_json(s.strategy.body)},
              {"embedding", s.strategy.embedding}};
}
inline StrategySample strategy_sample_from_json(const json& j) {
  StrategySample s;
  s.raw = tokenseq_from_json(j.at("raw"));
  s.prompt_text = j.at("prompt_text").get<std::string>();
  s.logprobs_old = j.at("logprobs_old").get<std::vector<double>>();
  s.parse_ok = j.at("parse_ok").get<bool>();
  s.strategy.body = tokenseq_from_json(j.at("body"));
  s.strategy.embedding = j.at("embedding").get<std::vector<double>>();
  return s;
}

inline json to_json(const RewardRecord& r) {
  return json{{"source", r.source == RewardSource::kStrategy ? "strategy" : "action"},
              {"strategy_index", r.strategy_index},
              {"rollout_index", r.rollout_index},
              {"step_index", r.step_index},
              {"outcome", r.outcome},
              {"length_penalty", r.length_penalty},
              {"format_penalty", r.format_penalty},
              {"judge_penalty", r.judge_penalty},
              {"total", r.total}};
}
inline RewardRecord reward_record_from_json(const json& j) {
  RewardRecord r;
  const std::string src = j.at("source").get<std::string>();
  if (src != "strategy" && src != "action")
    throw std::runtime_error("unknown reward source '" + src + "'");
  r.source = src == "strategy" ? RewardSource::kStrategy : RewardSource::kAction;
  r.strategy_index = j.at("strategy_index").get<int>();
  r.rollout_index = j.at("rollout_index").get<int>();
  r.step_index = j.at("step_index").get<int>();
  r.outcome = j.at("outcome").get<double>();
  r.length_penalty = j.at("length_penalty").get<double>();
  r.format_penalty = j.at("format_penalty").get<double>();
  r.judge_penalty = j.at("judge_penalty").get<double>();
  r.total = j.at("total").get<double>();
  return r;
}

// -- trajectory dump files -- //
// Header: magic "STRJ", u32 version, u32 record count. Records follow as
// u32 byte length + JSON payload. Record 0 is batch metadata (strategies,
// judge flags, advantages, reward records); each further record is one
// trajectory.

struct BatchDump {
  uint64_t task_seed = 0;
  std::string mode;
  std::vector<StrategySample> strategies;
  std::vector<std::vector<std::vector<int>>> judge_flags;
  std::vector<double> strategy_rewards;
  std::vector<double> strategy_advantages;
  std::vector<std::vector<double>> action_advantages;
  std::vector<RewardRecord> reward_records;
  std::vector<Trajectory> trajectories;  // row-major over (strategy, rollout)
};

inline BatchDump make_dump(const HierarchicalBatch& b) {
  BatchDump d;
  d.task_seed = b.task_seed;
  d.mode = "strata";
  d.strategies = b.strategies;
  d.judge_flags = b.judge_flags;
  d.strategy_rewards = b.strategy_rewards;
  d.strategy_advantages = b.strategy_advantages;
  d.action_advantages = b.action_advantages;
  d.reward_records = b.reward_records;
  for (const auto& group : b.rollouts)
    for (const Trajectory& t : group) d.trajectories.push_back(t);
  return d;
}

inline BatchDump make_dump(const FlatBatch& b) {
  BatchDump d;
  d.task_seed = b.task_seed;
  d.mode = "flat-grpo";
  d.action_advantages = {b.advantages};
  d.reward_records = b.reward_records;
  d.trajectories = b.rollouts;
  return d;
}

inline void write_dump(const BatchDump& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dump: " + path);
  auto put_u32 = [&](uint32_t x) {
    out.write(reinterpret_cast<const char*>(&x), sizeof x);
  };
  auto put_record = [&](const json& j) {
    const std::string payload = j.dump();
    put_u32(uint32_t(payload.size()));
    out.write(payload.data(), std::streamsize(payload.size()));
  };

  out.write("STRJ", 4);
  put_u32(1);  // version
  put_u32(uint32_t(1 + d.trajectories.size()));

  json meta;
  meta["task_seed"] = d.task_seed;
  meta["mode"] = d.mode;
  json strategies = json::array();
  for (const StrategySample& s : d.strategies) strategies.push_back(to_json(s));
  meta["strategies"] = strategies;
  meta["judge_flags"] = d.judge_flags;
  meta["strategy_rewards"] = d.strategy_rewards;
  meta["strategy_advantages"] = d.strategy_advantages;
  meta["action_advantages"] = d.action_advantages;
  json records = json::array();
  for (const RewardRecord& r : d.reward_records) records.push_back(to_json(r));
  meta["reward_records"] = records;
  put_record(meta);
  for (const Trajectory& t : d.trajectories) put_record(to_json(t));
  if (!out) throw std::runtime_error("short write on dump: " + path);
}

// Throws with the byte offset on any truncation or corruption.
inline BatchDump read_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dump: " + path);
  uint64_t offset = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("corrupt dump " + path + " at byte " +
                             std::to_string(offset) + ": " + what);
  };
  auto get_bytes = [&](char* dst, size_t len, const char* what) {
    in.read(dst, std::streamsize(len));
    if (size_t(in.gcount()) != len) fail(std::string("truncated ") + what);
    offset += len;
  };

  char magic[4];
  get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, "STRJ", 4) != 0) fail("bad magic");
  uint32_t version = 0, count = 0;
  get_bytes(reinterpret_cast<char*>(&version), 4, "version");
  if (version != 1) fail("unsupported version " + std::to_string(version));
  get_bytes(reinterpret_cast<char*>(&count), 4, "record count");
  if (count < 1) fail("empty dump");

  std::vector<json> records;
  for (uint32_t r = 0; r < count; ++r) {
    uint32_t len = 0;
    get_bytes(reinterpret_cast<char*>(&len), 4, "record length");
    if (len == 0 || len > (1u << 28)) fail("implausible record length");
    std::string payload(len, '\0');
    get_bytes(payload.data(), len, "record payload");
    json j = json::parse(payload, nullptr, false);
    if (j.is_discarded()) fail("record is not valid JSON");
    records.push_back(std::move(j));
  }
  {
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0) fail("trailing bytes after final record");
  }

  BatchDump d;
  try {
    const json& meta = records[0];
    d.task_seed = meta.at("task_seed").get<uint64_t>();
    d.mode = meta.at("mode").get<std::string>();
    for (const json& s : meta.at("strategies"))
      d.strategies.push_back(strategy_sample_from_json(s));
    d.judge_flags =
        meta.at("judge_flags").get<std::vector<std::vector<std::vector<int>>>>();
    d.strategy_rewards = meta.at("strategy_rewards").get<std::vector<double>>();
    d.strategy_advantages =
        meta.at("strategy_advantages").get<std::vector<double>>();
    d.action_advantages =
        meta.at("action_advantages").get<std::vector<std::vector<double>>>();
    for (const json& r : meta.at("reward_records"))
      d.reward_records.push_back(reward_record_from_json(r));
    for (uint32_t r = 1; r < count; ++r)
      d.trajectories.push_back(trajectory_from_json(records[r]));
  } catch (const json::exception& e) {
    fail(std::string("schema mismatch: ") + e.what());
  }
  return d;
}

// -- metrics lines -- //
// One JSON object per training step. Built by hand with %.17g so repeated
// runs emit byte-identical files; no wall-clock or host-dependent fields.

struct MetricsRow {
  int step = 0;
  std::string mode;
  double mean_outcome = 0.0;
  double success_rate = 0.0;
  double objective = 0.0;
  double strategy_term = 0.0;
  double action_term = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  double reward_min = 0.0;
  double reward_max = 0.0;
  uint64_t strategy_tokens = 0;
  uint64_t action_tokens = 0;
  uint64_t judge_tokens = 0;
};

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string metrics_line(const MetricsRow& m) {
  std::string out = "{";
  auto field = [&](const char* key, const std::string& val, bool quote) {
    if (out.size() > 1) out += ",";
    out += "\"";
    out += key;
    out += "\":";
    if (quote) out += "\"";
    out += val;
    if (quote) out += "\"";
  };
  field("step", std::to_string(m.step), false);
  field("mode", m.mode, true);
  field("mean_outcome", format_double(m.mean_outcome), false);
  field("success_rate", format_double(m.success_rate), false);
  field("objective", format_double(m.objective), false);
  field("strategy_term", format_double(m.strategy_term), false);
  field("action_term", format_double(m.action_term), false);
  field("kl", format_double(m.kl), false);
  field("grad_norm", format_double(m.grad_norm), false);
  field("reward_min", format_double(m.reward_min), false);
  field("reward_max", format_double(m.reward_max), false);
  field("strategy_tokens", std::to_string(m.strategy_tokens), false);
  field("action_tokens", std::to_string(m.action_tokens), false);
  field("judge_tokens", std::to_string(m.judge_tokens), false);
  out += "}";
  return out;
}

}  // namespace strata
