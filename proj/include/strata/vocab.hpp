#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace strata {

using TokenId = int32_t;

// A sampled token sequence. `tokens` includes the trailing <eos> when the
// sequence terminated naturally; `text()` drops it. Length for penalty
// purposes is tokens.size().
struct TokenSeq {
  std::vector<TokenId> tokens;

  bool operator==(const TokenSeq& o) const { return tokens == o.tokens; }
  size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

// Fixed shared vocabulary for both toy environments. The policy can only
// emit these tokens; observation text is hashed as raw words and does not
// need ids. Index 0 is <eos>.
class Vocab {
 public:
  Vocab() {
    static const char* kWords[] = {
        "<eos>",
        "<strategy>", "</strategy>", "<judgment>", "</judgment>",
        "[", "]", ",",
        "1", "2", "3", "4", "5", "6", "7", "8",
        "9", "10", "11", "12", "13", "14", "15", "16",
        "go", "take", "open", "put",
        "left", "right", "forward", "back",
        "north", "south", "east", "west",
        "key", "red", "blue", "mug", "book", "shelf", "table",
        "short", "long", "route", "the", "on", "first", "then", "to",
    };
    for (const char* w : kWords) {
      id_of_[w] = TokenId(words_.size());
      words_.push_back(w);
    }
  }

  static const Vocab& instance() {
    static const Vocab v;
    return v;
  }

  int size() const { return int(words_.size()); }

  const std::string& word(TokenId id) const {
    if (id < 0 || size_t(id) >= words_.size())
      throw std::out_of_range("token id out of range: " + std::to_string(id));
    return words_[size_t(id)];
  }

  // -1 if the word is not in the vocabulary
  TokenId id(const std::string& w) const {
    auto it = id_of_.find(w);
    return it == id_of_.end() ? TokenId(-1) : it->second;
  }

  TokenId eos() const { return 0; }

  std::string detokenize(const TokenSeq& seq) const {
    std::string out;
    for (TokenId t : seq.tokens) {
      if (t == eos()) continue;
      if (!out.empty()) out += ' ';
      out += word(t);
    }
    return out;
  }

  // Whitespace tokenizer; unknown words are skipped.
  TokenSeq tokenize(const std::string& text) const {
    TokenSeq seq;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
      TokenId t = id(w);
      if (t >= 0) seq.tokens.push_back(t);
    }
    return seq;
  }

 private:
  std::vector<std::string> words_;
  std::map<std::string, TokenId> id_of_;
};

}  // namespace strata
