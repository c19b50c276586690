#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/features.hpp"
#include "strata/rng.hpp"
#include "strata/types.hpp"
#include "strata/vocab.hpp"

namespace strata {

// Which snapshot a parameter set is playing. Generation must come from the
// frozen behaviour snapshot, re-scoring from the live parameters, and the KL
// reference never moves; mixing these up is a silent correctness bug, so the
// role travels with the matrix and is asserted at use sites.
enum class ParamRole : uint8_t { kCurrent = 0, kOld = 1, kReference = 2 };

struct PolicyParams {
  ParamRole role = ParamRole::kCurrent;
  int v = 0;
  int d = 0;
  // feature-major: w[f * v + tok], so one active feature touches a
  // contiguous run of logit weights
  std::vector<double> w;

  static PolicyParams zeros(int v, int d, ParamRole role) {
    PolicyParams p;
    p.role = role;
    p.v = v;
    p.d = d;
    p.w.assign(size_t(v) * size_t(d), 0.0);
    return p;
  }

  PolicyParams as_role(ParamRole role) const {
    PolicyParams p = *this;
    p.role = role;
    return p;
  }

  double& at(int f, int tok) { return w[size_t(f) * size_t(v) + size_t(tok)]; }
  double at(int f, int tok) const { return w[size_t(f) * size_t(v) + size_t(tok)]; }
};

// Softmax over logits w.phi / temperature. Probabilities sum to 1 exactly
// (final renormalization) and the log-partition is returned so stored and
// re-scored logprobs agree bit for bit.
struct TokenDistribution {
  std::vector<double> probs;
  std::vector<double> logits;  // already divided by temperature
  double log_z = 0.0;

  double logprob(TokenId t) const { return logits[size_t(t)] - log_z; }
};

inline TokenDistribution token_distribution(const PolicyParams& p,
                                            const std::vector<int32_t>& features,
                                            double temperature,
                                            uint64_t* op_counter = nullptr) {
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be > 0");
  TokenDistribution dist;
  dist.logits.assign(size_t(p.v), 0.0);
  for (int32_t f : features) {
    const double* col = p.w.data() + size_t(f) * size_t(p.v);
    for (int t = 0; t < p.v; ++t) dist.logits[size_t(t)] += col[t];
  }
  if (op_counter) *op_counter += uint64_t(features.size()) * uint64_t(p.v);
  double max_logit = dist.logits[0];
  for (int t = 0; t < p.v; ++t) {
    dist.logits[size_t(t)] /= temperature;
    if (dist.logits[size_t(t)] > max_logit || t == 0) max_logit = dist.logits[size_t(t)];
  }
  double z = 0.0;
  dist.probs.assign(size_t(p.v), 0.0);
  for (int t = 0; t < p.v; ++t) {
    dist.probs[size_t(t)] = std::exp(dist.logits[size_t(t)] - max_logit);
    z += dist.probs[size_t(t)];
  }
  for (int t = 0; t < p.v; ++t) dist.probs[size_t(t)] /= z;
  dist.log_z = max_logit + std::log(z);
  return dist;
}

inline TokenId sample_token(const TokenDistribution& dist, Rng& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  for (size_t t = 0; t < dist.probs.size(); ++t) {
    cum += dist.probs[t];
    if (u < cum) return TokenId(t);
  }
  return TokenId(dist.probs.size() - 1);  // rounding slack lands on the last id
}

struct SampledSeq {
  TokenSeq seq;                  // includes the trailing <eos> when emitted
  std::vector<double> logprobs;  // one per token, behaviour-policy scores
};

// Autoregressive sampling until <eos> or max_len tokens. Only the frozen
// behaviour snapshot may generate.
inline SampledSeq sample_sequence(Channel channel, const PolicyParams& p,
                                  const std::vector<TokenId>& strategy,
                                  const std::string& observation, Rng& rng,
                                  double temperature, int max_len,
                                  uint64_t* op_counter = nullptr) {
  if (p.role != ParamRole::kOld)
    throw std::logic_error("sample_sequence requires the behaviour snapshot");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  const Vocab& vocab = Vocab::instance();
  SampledSeq out;
  for (int i = 0; i < max_len; ++i) {
    const auto feats = featurize(channel, strategy, observation, out.seq.tokens, p.d);
    const TokenDistribution dist = token_distribution(p, feats, temperature, op_counter);
    const TokenId t = sample_token(dist, rng);
    out.seq.tokens.push_back(t);
    out.logprobs.push_back(dist.logprob(t));
    if (t == vocab.eos()) break;
  }
  return out;
}

// d(log pi(tok)) / d(w[f, t]) = phi_f * (1[t == tok] - pi_t) / temperature,
// returned sparsely as the active features plus one coefficient per token.
struct LogprobGrad {
  std::vector<int32_t> features;
  std::vector<double> coeffs;  // length v
};

inline LogprobGrad logprob_gradient(const PolicyParams& p,
                                    const std::vector<int32_t>& features,
                                    TokenId token, double temperature) {
  const TokenDistribution dist = token_distribution(p, features, temperature);
  LogprobGrad g;
  g.features = features;
  g.coeffs.assign(size_t(p.v), 0.0);
  for (int t = 0; t < p.v; ++t)
    g.coeffs[size_t(t)] = ((t == token ? 1.0 : 0.0) - dist.probs[size_t(t)]) / temperature;
  return g;
}

// -- checkpoint format -- //
// magic "STPK", u32 version, u8 role, u64 v, u64 d, then v*d doubles in
// feature-major order, little-endian.

inline void save_params(const PolicyParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const char magic[4] = {'S', 'T', 'P', 'K'};
  const uint32_t version = 1;
  const uint8_t role = uint8_t(p.role);
  const uint64_t v = uint64_t(p.v), d = uint64_t(p.d);
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&role), sizeof role);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(p.w.data()),
            std::streamsize(p.w.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

inline PolicyParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  uint32_t version = 0;
  uint8_t role = 0;
  uint64_t v = 0, d = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "STPK", 4) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  in.read(reinterpret_cast<char*>(&role), sizeof role);
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  if (!in || role > 2 || v == 0 || d == 0 || v * d > (1ull << 28))
    throw std::runtime_error("corrupt checkpoint header: " + path);
  PolicyParams p;
  p.role = ParamRole(role);
  p.v = int(v);
  p.d = int(d);
  p.w.resize(size_t(v * d));
  in.read(reinterpret_cast<char*>(p.w.data()),
          std::streamsize(p.w.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return p;
}

}  // namespace strata
