#pragma once

#include <cstdint>
#include <cstdlib>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "strata/rng.hpp"
#include "strata/types.hpp"
#include "strata/vocab.hpp"

namespace strata {

// Static description of an environment family.
struct EnvSpec {
  std::string name;
  int horizon = 0;
  int vocab_size = 0;
  std::vector<TokenId> verbs;
  std::vector<TokenId> nouns;
  // tokens that commit a trajectory to one plan over another; the judge
  // matches these between strategies and actions
  std::vector<TokenId> route_lexicon;
};

enum class EnvKind { kChainKey, kGridQuest };

// Chain-key rooms. The two branches are observationally identical until
// their final room, and the briefing that says which side is short and
// which door is real appears only in the very first observation.
enum class CkRoom : int {
  kGate = 0, kShort1, kShort2, kDoorRoom,
  kLong1, kLong2, kLong3, kLong4, kFork,
  kTrap, kPrize,
};

struct EnvState {
  EnvKind kind = EnvKind::kChainKey;
  uint64_t task_seed = 0;
  int steps_elapsed = 0;
  bool done = false;
  bool success = false;

  // chain-key world
  CkRoom room = CkRoom::kGate;
  bool key_held = false;
  bool key_at_gate = true;
  bool jammed = false;
  int short_side = 0;   // 0=left 1=right
  int door_color = 0;   // 0=red 1=blue

  // grid-quest world (4x4 cells indexed r*4+c)
  int agent_cell = 0;
  int mug_cell = 0;     // -1 when carried
  int book_cell = 0;    // -1 when carried
  int shelf_cell = 0;
  int table_cell = 0;
  int carrying = 0;     // 0=nothing 1=mug 2=book
  int task_obj = 1;     // 1=mug 2=book
  int task_rcpt = 0;    // 0=shelf 1=table

  uint64_t hash() const {
    uint64_t h = Rng::mix(task_seed ^ uint64_t(kind == EnvKind::kChainKey ? 11 : 13));
    auto fold = [&](uint64_t x) { h = Rng::mix(h ^ (x + 0x9e37u)); };
    fold(uint64_t(steps_elapsed));
    fold(done); fold(success);
    fold(uint64_t(room)); fold(key_held); fold(key_at_gate); fold(jammed);
    fold(uint64_t(short_side)); fold(uint64_t(door_color));
    fold(uint64_t(agent_cell)); fold(uint64_t(mug_cell + 2));
    fold(uint64_t(book_cell + 2)); fold(uint64_t(shelf_cell));
    fold(uint64_t(table_cell)); fold(uint64_t(carrying));
    fold(uint64_t(task_obj)); fold(uint64_t(task_rcpt));
    return h;
  }
};

struct StepResult {
  EnvState state;
  bool parse_ok = false;
};

// Outcome reward: failures score 0, successes score 1 - 0.5 * T/H so that
// faster completions are worth more (1 at T=0 limit, 0.5 at T=H).
inline double outcome_reward(bool success, int steps_taken, int horizon) {
  if (horizon <= 0) throw std::invalid_argument("outcome_reward: horizon <= 0");
  if (steps_taken < 0 || steps_taken > horizon)
    throw std::invalid_argument("outcome_reward: steps outside [0, horizon]");
  if (!success) return 0.0;
  return 1.0 - 0.5 * double(steps_taken) / double(horizon);
}

class Environment {
 public:
  explicit Environment(const std::string& name, int horizon_override = 0) {
    const Vocab& v = Vocab::instance();
    if (name == "chain-key") {
      kind_ = EnvKind::kChainKey;
      spec_.name = name;
      spec_.horizon = horizon_override > 0 ? horizon_override : 12;
      spec_.verbs = {v.id("go"), v.id("take"), v.id("open")};
      spec_.nouns = {v.id("left"), v.id("right"), v.id("forward"),
                     v.id("back"), v.id("key"), v.id("red"), v.id("blue")};
      spec_.route_lexicon = {v.id("left"), v.id("right"), v.id("red"),
                             v.id("blue"), v.id("key")};
    } else if (name == "grid-quest") {
      kind_ = EnvKind::kGridQuest;
      spec_.name = name;
      spec_.horizon = horizon_override > 0 ? horizon_override : 16;
      spec_.verbs = {v.id("go"), v.id("take"), v.id("put")};
      spec_.nouns = {v.id("north"), v.id("south"), v.id("east"),
                     v.id("west"), v.id("mug"), v.id("book")};
      spec_.route_lexicon = {v.id("mug"), v.id("book"), v.id("shelf"),
                             v.id("table")};
    } else {
      throw std::invalid_argument("unknown environment: " + name);
    }
    spec_.vocab_size = v.size();
  }

  const EnvSpec& spec() const { return spec_; }

  EnvState reset(uint64_t task_seed) const {
    EnvState s;
    s.kind = kind_;
    s.task_seed = task_seed;
    if (kind_ == EnvKind::kChainKey) {
      Rng r = derive_stream(task_seed, {0x636b75ull});
      s.short_side = int(r.next_below(2));
      s.door_color = int(r.next_below(2));
      s.room = CkRoom::kGate;
      s.key_at_gate = true;
    } else {
      Rng r = derive_stream(task_seed, {0x677175ull});
      // four distinct item cells on the 4x4 grid; the agent may start anywhere
      int cells[4];
      for (int i = 0; i < 4; ++i) {
        bool fresh;
        do {
          cells[i] = int(r.next_below(16));
          fresh = true;
          for (int j = 0; j < i; ++j) fresh = fresh && cells[j] != cells[i];
        } while (!fresh);
      }
      s.mug_cell = cells[0];
      s.book_cell = cells[1];
      s.shelf_cell = cells[2];
      s.table_cell = cells[3];
      s.agent_cell = int(r.next_below(16));
      s.task_obj = 1 + int(r.next_below(2));
      s.task_rcpt = int(r.next_below(2));
    }
    return s;
  }

  // Observation text is regenerated from the state every step. The task
  // briefing is part of the initial observation only; afterwards the agent
  // sees just its surroundings.
  std::string observation(const EnvState& s) const {
    std::string out;
    if (s.steps_elapsed == 0) out = briefing(s) + " ";
    out += room_text(s);
    return out;
  }

  StepResult step(const EnvState& state, const TokenSeq& action) const {
    if (state.done) throw std::logic_error("step called on finished episode");
    StepResult out;
    out.state = state;
    EnvState& s = out.state;

    TokenId verb = -1, noun = -1;
    out.parse_ok = parse_action(action, verb, noun);
    s.steps_elapsed += 1;

    if (out.parse_ok) {
      if (kind_ == EnvKind::kChainKey) apply_chain(s, verb, noun);
      else apply_grid(s, verb, noun);
    }
    if (s.success || s.steps_elapsed >= spec_.horizon) s.done = true;
    return out;
  }

  // Well-formed means the action contains one of this environment's verbs
  // followed (not necessarily adjacently) by one of its nouns; surrounding
  // chatter tokens are ignored, so "take the key" works as well as
  // "take key". The first verb and the first noun after it win.
  bool parse_action(const TokenSeq& action, TokenId& verb, TokenId& noun) const {
    const Vocab& v = Vocab::instance();
    size_t vi = action.tokens.size();
    for (size_t i = 0; i < action.tokens.size(); ++i) {
      const TokenId t = action.tokens[i];
      if (t == v.eos()) return false;  // terminated before a full command
      bool is_verb = false;
      for (TokenId x : spec_.verbs) is_verb = is_verb || x == t;
      if (is_verb) { vi = i; verb = t; break; }
    }
    if (vi == action.tokens.size()) return false;
    for (size_t i = vi + 1; i < action.tokens.size(); ++i) {
      const TokenId t = action.tokens[i];
      if (t == v.eos()) return false;
      for (TokenId x : spec_.nouns)
        if (x == t) { noun = t; return true; }
    }
    return false;
  }

  // Steps remaining on the shortest path to success, used by the judge as
  // its progress oracle. Computed by breadth-first search over the reachable
  // state graph (chain-key) or closed-form over the grid.
  int solve_distance(const EnvState& s) const {
    if (s.success) return 0;
    if (kind_ == EnvKind::kChainKey) return chain_bfs(s);
    return grid_distance(s);
  }

 private:
  EnvKind kind_;
  EnvSpec spec_;

  static const char* side_word(int side) { return side == 0 ? "left" : "right"; }
  static const char* color_word(int c) { return c == 0 ? "red" : "blue"; }
  static const char* obj_word(int o) { return o == 1 ? "mug" : "book"; }
  static const char* rcpt_word(int r) { return r == 0 ? "shelf" : "table"; }

  std::string briefing(const EnvState& s) const {
    if (kind_ == EnvKind::kChainKey) {
      return std::string("task reach the prize the short route lies ") +
             side_word(s.short_side) + " the prize waits behind the " +
             color_word(s.door_color) + " door the key opens it";
    }
    return std::string("task put the ") + obj_word(s.task_obj) + " on the " +
           rcpt_word(s.task_rcpt);
  }

  std::string room_text(const EnvState& s) const {
    std::string out;
    if (kind_ == EnvKind::kChainKey) {
      switch (s.room) {
        case CkRoom::kGate:
          out = "you stand at the gate";
          if (s.key_at_gate) out += " a key lies here";
          out += " passages lead left and right";
          break;
        case CkRoom::kShort1: case CkRoom::kShort2:
        case CkRoom::kLong1: case CkRoom::kLong2:
        case CkRoom::kLong3: case CkRoom::kLong4:
          out = "a narrow passage stretches on you can go forward or back";
          break;
        case CkRoom::kDoorRoom:
          out = s.jammed ? "rubble blocks both doors the only way is back"
                         : "a red door and a blue door stand locked here";
          break;
        case CkRoom::kFork:
          out = "two archways stand here one red one blue";
          break;
        case CkRoom::kTrap:
          out = "you are lost in the wilds";
          break;
        case CkRoom::kPrize:
          out = "the prize is yours";
          break;
      }
      if (s.key_held) out += " you carry the key";
      return out;
    }
    int r = s.agent_cell / 4, c = s.agent_cell % 4;
    out = "you stand at row " + std::to_string(r + 1) + " col " + std::to_string(c + 1);
    if (s.mug_cell == s.agent_cell) out += " a mug rests here";
    if (s.book_cell == s.agent_cell) out += " a book rests here";
    if (s.shelf_cell == s.agent_cell) out += " a shelf stands here";
    if (s.table_cell == s.agent_cell) out += " a table stands here";
    if (s.carrying != 0) out += std::string(" you carry the ") + obj_word(s.carrying);
    return out;
  }

  // Invalid-in-context moves fall through silently: the step is spent and
  // the world stays as it was.
  void apply_chain(EnvState& s, TokenId verb, TokenId noun) const {
    const Vocab& v = Vocab::instance();
    const bool go = verb == v.id("go");
    const bool take = verb == v.id("take");
    const bool open = verb == v.id("open");
    const int side_of_noun =
        noun == v.id("left") ? 0 : (noun == v.id("right") ? 1 : -1);
    const int color_of_noun =
        noun == v.id("red") ? 0 : (noun == v.id("blue") ? 1 : -1);
    const bool fwd = noun == v.id("forward");
    const bool back = noun == v.id("back");

    switch (s.room) {
      case CkRoom::kGate:
        if (take && noun == v.id("key") && s.key_at_gate) {
          s.key_at_gate = false;
          s.key_held = true;
        } else if (go && side_of_noun >= 0) {
          s.room = side_of_noun == s.short_side ? CkRoom::kShort1 : CkRoom::kLong1;
        }
        break;
      case CkRoom::kShort1:
        if (go && fwd) s.room = CkRoom::kShort2;
        else if (go && back) s.room = CkRoom::kGate;
        break;
      case CkRoom::kShort2:
        if (go && fwd) s.room = CkRoom::kDoorRoom;
        else if (go && back) s.room = CkRoom::kShort1;
        break;
      case CkRoom::kDoorRoom:
        if (open && color_of_noun >= 0 && s.key_held && !s.jammed) {
          if (color_of_noun == s.door_color) {
            s.room = CkRoom::kPrize;
            s.success = true;
          } else {
            s.jammed = true;  // the wrong door brings the frame down on both
          }
        } else if (go && back) {
          s.room = CkRoom::kShort2;
        }
        break;
      case CkRoom::kLong1:
        if (go && fwd) s.room = CkRoom::kLong2;
        else if (go && back) s.room = CkRoom::kGate;
        break;
      case CkRoom::kLong2:
        if (go && fwd) s.room = CkRoom::kLong3;
        else if (go && back) s.room = CkRoom::kLong1;
        break;
      case CkRoom::kLong3:
        if (go && fwd) s.room = CkRoom::kLong4;
        else if (go && back) s.room = CkRoom::kLong2;
        break;
      case CkRoom::kLong4:
        if (go && fwd) s.room = CkRoom::kFork;
        else if (go && back) s.room = CkRoom::kLong3;
        break;
      case CkRoom::kFork:
        if (go && color_of_noun >= 0) {
          if (color_of_noun == s.door_color) {
            s.room = CkRoom::kPrize;
            s.success = true;
          } else {
            s.room = CkRoom::kTrap;
          }
        } else if (go && back) {
          s.room = CkRoom::kLong4;
        }
        break;
      case CkRoom::kTrap:
      case CkRoom::kPrize:
        break;
    }
  }

  void apply_grid(EnvState& s, TokenId verb, TokenId noun) const {
    const Vocab& v = Vocab::instance();
    int r = s.agent_cell / 4, c = s.agent_cell % 4;
    if (verb == v.id("go")) {
      if (noun == v.id("north") && r > 0) r -= 1;
      else if (noun == v.id("south") && r < 3) r += 1;
      else if (noun == v.id("west") && c > 0) c -= 1;
      else if (noun == v.id("east") && c < 3) c += 1;
      s.agent_cell = r * 4 + c;
      return;
    }
    const int obj = noun == v.id("mug") ? 1 : (noun == v.id("book") ? 2 : 0);
    if (obj == 0) return;
    int& cell = obj == 1 ? s.mug_cell : s.book_cell;
    if (verb == v.id("take")) {
      if (s.carrying == 0 && cell == s.agent_cell) {
        s.carrying = obj;
        cell = -1;
      }
    } else if (verb == v.id("put")) {
      if (s.carrying != obj) return;
      const bool on_shelf = s.shelf_cell == s.agent_cell;
      const bool on_table = s.table_cell == s.agent_cell;
      if (!on_shelf && !on_table) return;
      s.carrying = 0;
      cell = s.agent_cell;
      const int rcpt = on_shelf ? 0 : 1;
      if (obj == s.task_obj && rcpt == s.task_rcpt) s.success = true;
    }
  }

  // state encoding for the chain-key BFS: room * 8 + key_held*4+ key_at_gate*2 + jammed
  int chain_bfs(const EnvState& s0) const {
    auto encode = [](CkRoom room, bool kh, bool kg, bool jam) {
      return int(room) * 8 + (kh ? 4 : 0) + (kg ? 2 : 0) + (jam ? 1 : 0);
    };
    std::vector<int> dist(11 * 8, -1);
    std::deque<int> queue;
    const int start = encode(s0.room, s0.key_held, s0.key_at_gate, s0.jammed);
    dist[size_t(start)] = 0;
    queue.push_back(start);
    while (!queue.empty()) {
      const int code = queue.front();
      queue.pop_front();
      const CkRoom room = CkRoom(code / 8);
      if (room == CkRoom::kPrize) return dist[size_t(code)];
      EnvState cur = s0;
      cur.room = room;
      cur.key_held = code & 4;
      cur.key_at_gate = code & 2;
      cur.jammed = code & 1;
      for (const auto& [verb, noun] : chain_edges(cur)) {
        EnvState next = cur;
        apply_chain(next, verb, noun);
        const int ncode = next.success
                              ? encode(CkRoom::kPrize, next.key_held,
                                       next.key_at_gate, next.jammed)
                              : encode(next.room, next.key_held,
                                       next.key_at_gate, next.jammed);
        if (dist[size_t(ncode)] < 0) {
          dist[size_t(ncode)] = dist[size_t(code)] + 1;
          queue.push_back(ncode);
        }
      }
    }
    return -1;  // unreachable: fail-locked states have no path to the prize
  }

  std::vector<std::pair<TokenId, TokenId>> chain_edges(const EnvState&) const {
    const Vocab& v = Vocab::instance();
    std::vector<std::pair<TokenId, TokenId>> edges;
    for (TokenId verb : spec_.verbs)
      for (TokenId noun : spec_.nouns) edges.emplace_back(verb, noun);
    return edges;
  }

  static int manhattan(int a, int b) {
    return std::abs(a / 4 - b / 4) + std::abs(a % 4 - b % 4);
  }

  int grid_distance(const EnvState& s) const {
    const int obj_cell = s.task_obj == 1 ? s.mug_cell : s.book_cell;
    const int rcpt_cell = s.task_rcpt == 0 ? s.shelf_cell : s.table_cell;
    if (s.carrying == s.task_obj)
      return manhattan(s.agent_cell, rcpt_cell) + 1;
    if (s.carrying == 0)
      return manhattan(s.agent_cell, obj_cell) + 1 +
             manhattan(obj_cell, rcpt_cell) + 1;
    // hands full with the wrong object: drop it on the nearest receptacle first
    int best = -1;
    for (int rc : {s.shelf_cell, s.table_cell}) {
      const int d = manhattan(s.agent_cell, rc) + 1 + manhattan(rc, obj_cell) +
                    1 + manhattan(obj_cell, rcpt_cell) + 1;
      if (best < 0 || d < best) best = d;
    }
    return best;
  }
};

}  // namespace strata
