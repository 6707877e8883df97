#pragma once

#include <map>
#include <vector>

#include "samt/rng.hpp"
#include "samt/streamer.hpp"
#include "samt/vocab.hpp"

namespace samt::testing {

// Per-frame answers for a scripted decode: the autoregressive pass returns
// seq elements in order (then EOS forever); slot queries answer by onset
// pitch; the BOS row answers pedal_token.
struct FrameScript {
  std::vector<int> seq;
  std::map<int, int> slot_response;
  int pedal_token = kPedalOffId;
  int default_slot = kBlankId;
};

class ScriptedDecoder : public FrameDecoder {
 public:
  explicit ScriptedDecoder(std::vector<FrameScript> frames)
      : frames_(std::move(frames)) {}

  void begin_frame(const float* window) override;
  int next_token(const std::vector<int>& ids) override;
  std::vector<int> read_slots(const std::vector<int>& ids) override;

  // ids passed to the first next_token call of each frame (history + BOS)
  const std::vector<std::vector<int>>& first_inputs() const { return first_inputs_; }
  // every slot query, per frame
  const std::vector<std::vector<std::vector<int>>>& slot_queries() const {
    return slot_queries_;
  }
  // first window row, kept when store_windows is set before decoding
  const std::vector<std::vector<float>>& windows() const { return windows_; }

  bool store_windows = false;
  int window_floats = 0;  // floats to copy per window when storing

 private:
  std::vector<FrameScript> frames_;
  int frame_ = -1;
  size_t cursor_ = 0;
  std::vector<std::vector<int>> first_inputs_;
  std::vector<std::vector<std::vector<int>>> slot_queries_;
  std::vector<std::vector<float>> windows_;
};

// Seeded chaos: emits a mix of valid and invalid tokens so protocol
// enforcement, not decoder behavior, bounds the output.
class AdversarialDecoder : public FrameDecoder {
 public:
  explicit AdversarialDecoder(uint64_t seed) : rng_(seed) {}

  void begin_frame(const float*) override {}
  int next_token(const std::vector<int>& ids) override;
  std::vector<int> read_slots(const std::vector<int>& ids) override;

 private:
  int random_token();
  Rng rng_;
};

}  // namespace samt::testing
