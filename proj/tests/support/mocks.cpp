#include "support/mocks.hpp"

#include "samt/common.hpp"

namespace samt::testing {

void ScriptedDecoder::begin_frame(const float* window) {
  ++frame_;
  cursor_ = 0;
  first_inputs_.emplace_back();
  slot_queries_.emplace_back();
  if (store_windows) {
    windows_.emplace_back(window, window + window_floats);
  }
}

int ScriptedDecoder::next_token(const std::vector<int>& ids) {
  check(frame_ >= 0, "next_token before begin_frame");
  if (first_inputs_.back().empty()) first_inputs_.back() = ids;
  const FrameScript& script = frames_.at(static_cast<size_t>(frame_));
  if (cursor_ < script.seq.size()) return script.seq[cursor_++];
  return kEosId;
}

std::vector<int> ScriptedDecoder::read_slots(const std::vector<int>& ids) {
  check(frame_ >= 0, "read_slots before begin_frame");
  slot_queries_.back().push_back(ids);
  const FrameScript& script = frames_.at(static_cast<size_t>(frame_));
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id == kBosId) {
      out.push_back(script.pedal_token);
    } else {
      Token t(id);
      check(t.is_onset(), "slot query must be an onset token or BOS");
      auto it = script.slot_response.find(t.pitch());
      out.push_back(it != script.slot_response.end() ? it->second
                                                     : script.default_slot);
    }
  }
  return out;
}

int AdversarialDecoder::random_token() {
  int roll = static_cast<int>(rng_.randint(0, 99));
  if (roll < 40) return Token::onset(static_cast<int>(rng_.randint(0, 127))).id;
  if (roll < 55) return kEosId;
  if (roll < 65) return Token::offset(static_cast<int>(rng_.randint(0, 127))).id;
  if (roll < 75) return kBlankId;
  if (roll < 85) return rng_.randint(0, 1) ? kPedalOnId : kPedalOffId;
  return static_cast<int>(rng_.randint(0, kVocabSize - 1));
}

int AdversarialDecoder::next_token(const std::vector<int>&) {
  return random_token();
}

std::vector<int> AdversarialDecoder::read_slots(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) {
    int roll = static_cast<int>(rng_.randint(0, 99));
    if (Token(id).is_onset() && roll < 45) {
      out.push_back(Token::offset(Token(id).pitch()).id);
    } else if (roll < 65) {
      out.push_back(kBlankId);
    } else {
      out.push_back(random_token());
    }
  }
  return out;
}

}  // namespace samt::testing
