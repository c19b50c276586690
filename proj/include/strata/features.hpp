#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "strata/vocab.hpp"

namespace strata {

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline int32_t bucket_of(const std::string& feature, int d) {
  return int32_t(fnv1a64(feature) % uint64_t(d));
}

// What kind of text the policy is producing. Each channel salts every
// feature string so the three generation modes own disjoint weight columns:
// proposing a plan, acting a step, and judging a rollout are different jobs,
// and sharing bag-of-words columns between them lets the channel with the
// strongest learning signal trample the others through the softmax coupling.
enum class Channel : uint8_t { kStrategy, kAction, kJudge };

inline const char* channel_salt(Channel c) {
  switch (c) {
    case Channel::kStrategy: return "S|";
    case Channel::kAction: return "A|";
    case Channel::kJudge: return "J|";
  }
  return "?|";
}

// Sparse binary context features for the token policy, hashed into d
// buckets. The context is (channel, strategy tokens, observation text,
// generated prefix); words are hashed as strings so observations need no
// vocabulary.
//
// Feature inventory (w = word, ^ = empty-prefix marker), each prefixed with
// the channel salt:
//   b                  bias
//   s1:w / s2:w1|w2    strategy unigrams and consecutive bigrams
//   o1:w / o2:w1|w2    observation unigrams and consecutive bigrams
//   p1:w               prefix unigrams
//   pl:w               last prefix word (pl:^ when the prefix is empty)
//   pn:k               prefix length
//   xo:last|w          last prefix word crossed with each observation word
//   xs:last|w          last prefix word crossed with each strategy word
//
// Values are {0, 1}: duplicate buckets collapse. Output is sorted.
inline std::vector<int32_t> featurize(Channel channel,
                                      const std::vector<TokenId>& strategy,
                                      const std::string& observation,
                                      const std::vector<TokenId>& prefix,
                                      int d) {
  const Vocab& vocab = Vocab::instance();
  std::vector<std::string> obs_words;
  {
    std::string w;
    for (char c : observation) {
      if (c == ' ' || c == '\t' || c == '\n') {
        if (!w.empty()) obs_words.push_back(w);
        w.clear();
      } else {
        w += c;
      }
    }
    if (!w.empty()) obs_words.push_back(w);
  }

  std::vector<int32_t> out;
  out.reserve(3 * (obs_words.size() + strategy.size() + prefix.size()) + 4);
  const std::string salt = channel_salt(channel);
  auto add = [&](const std::string& f) { out.push_back(bucket_of(salt + f, d)); };

  add("b");
  for (size_t i = 0; i < strategy.size(); ++i) {
    const std::string& w = vocab.word(strategy[i]);
    add("s1:" + w);
    if (i + 1 < strategy.size()) add("s2:" + w + "|" + vocab.word(strategy[i + 1]));
  }
  for (size_t i = 0; i < obs_words.size(); ++i) {
    add("o1:" + obs_words[i]);
    if (i + 1 < obs_words.size()) add("o2:" + obs_words[i] + "|" + obs_words[i + 1]);
  }
  std::string last = "^";
  for (size_t i = 0; i < prefix.size(); ++i) {
    const std::string& w = vocab.word(prefix[i]);
    add("p1:" + w);
    if (i + 1 == prefix.size()) last = w;
  }
  add("pl:" + last);
  add("pn:" + std::to_string(prefix.size()));
  for (const std::string& w : obs_words) add("xo:" + last + "|" + w);
  for (TokenId t : strategy) add("xs:" + last + "|" + vocab.word(t));

  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace strata
