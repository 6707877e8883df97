#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace samt {

// Token ids: 0 BLANK, 1 BOS, 2 EOS, 3 pedal-down, 4 pedal-up, 5..132
// onset(pitch 0..127), 133..260 offset(pitch 0..127).
enum class TokenKind { blank, bos, eos, pedal_on, pedal_off, onset, offset };

constexpr int kBlankId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kPedalOnId = 3;
constexpr int kPedalOffId = 4;
constexpr int kOnsetBase = 5;
constexpr int kOffsetBase = 133;
constexpr int kVocabSize = 261;
constexpr int kNumPitches = 128;

struct Token {
  int id = kBlankId;

  Token() = default;
  explicit Token(int id_) : id(id_) {}
  static Token blank() { return Token(kBlankId); }
  static Token bos() { return Token(kBosId); }
  static Token eos() { return Token(kEosId); }
  static Token pedal(bool down) { return Token(down ? kPedalOnId : kPedalOffId); }
  static Token onset(int pitch) { return Token(kOnsetBase + pitch); }
  static Token offset(int pitch) { return Token(kOffsetBase + pitch); }

  TokenKind kind() const;
  // pitch for onset/offset tokens, -1 otherwise
  int pitch() const;
  bool is_onset() const { return id >= kOnsetBase && id < kOnsetBase + kNumPitches; }
  bool is_offset() const { return id >= kOffsetBase && id < kOffsetBase + kNumPitches; }
  bool valid() const { return id >= 0 && id < kVocabSize; }

  bool operator==(const Token&) const = default;
};

std::string token_name(Token t);

struct Annotation {
  struct Note {
    int pitch = 0;
    double onset = 0.0;
    double offset = 0.0;
  };
  std::vector<Note> notes;
  // sustain-pedal intervals as (down, up) times
  std::vector<std::pair<double, double>> pedal;
};

// JSON schema: {"notes": [[pitch, onset, offset], ...],
//               "pedal": [[down, up], ...]} ("pedal" optional)
Annotation parse_annotation_json(const std::string& text);
std::string annotation_to_json(const Annotation& ann);
Annotation read_annotation(const std::filesystem::path& path);  // .json/.mid/.midi
void write_annotation_json(const std::filesystem::path& path, const Annotation& ann);

struct TargetConfig {
  int n_seq = 64;    // cap on decoded tokens per frame, BOS included
  int n_slots = 16;  // offset decoder slots
  bool pedal_enabled = true;
  double frame_period = 0.020;
};

// Supervision for one frame. Slot order follows the active set: ascending
// (onset frame, pitch), one entry per pitch.
struct FrameTargets {
  std::vector<Token> onset_seq;    // onset tokens in ascending pitch, then EOS
  std::vector<Token> slot_inputs;  // onset token per active note, n_slots entries
  std::vector<Token> slot_targets; // offset token or BLANK, n_slots entries
  std::vector<uint8_t> slot_mask;  // 1 where the slot holds a real note
  Token pedal_target;              // pedal state token (pedal_on / pedal_off)
};

// Rounds note times to frames and derives per-frame targets. Onsets and
// offsets are spread over two consecutive frames; a same-pitch re-onset
// force-closes the earlier note one frame before the new onset; the pedal
// slot carries the instantaneous state, not a spread event.
class TargetEncoder {
 public:
  TargetEncoder(const Annotation& ann, const TargetConfig& cfg);

  // smallest frame count that contains every event, plus the trailing
  // spread frame
  int min_frames() const { return min_frames_; }
  FrameTargets frame(int t) const;
  // onset token ids of frames [t-history, t-1] (each ending in EOS), oldest
  // first, for decoder history
  std::vector<std::vector<Token>> history(int t, int history_frames) const;

  // checks ingestion limits: per-frame onset count and active-set size
  std::optional<std::string> ingest_error() const { return ingest_error_; }

  struct QuantNote {
    int pitch;
    int on;        // first onset frame
    int off;       // last offset frame of the spread
    int on_last;   // last onset frame of the spread
    int off_first; // first offset frame of the spread
  };
  const std::vector<QuantNote>& quantized() const { return notes_; }

 private:
  TargetConfig cfg_;
  std::vector<QuantNote> notes_;
  std::vector<std::pair<int, int>> pedal_;  // [down, up) in frames
  int min_frames_ = 0;
  std::optional<std::string> ingest_error_;
};

// Reconstructs note intervals from frame targets; used to check that target
// generation and event assembly are mutual inverses at frame resolution.
Annotation targets_round_trip(const Annotation& ann, const TargetConfig& cfg);

}  // namespace samt
