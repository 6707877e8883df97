#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "samt/cqt.hpp"
#include "samt/events.hpp"
#include "samt/model.hpp"
#include "samt/vocab.hpp"

namespace samt {

struct StreamerConfig {
  int future_frames = 19;  // lookahead; decode latency is this many frames
  int window_m = 39;
  int n_bins = 352;
  int n_seq = 64;
  int n_slots = 16;
  bool pedal_enabled = true;
  bool single_decoder = false;
  int history_frames = 4;
  int dedupe_frames = 2;  // suppress same-pitch repeats this close together
  double frame_period = 0.020;

  int past_frames() const { return window_m - 1 - future_frames; }
  double latency() const { return future_frames * frame_period; }
  void validate() const;
  static StreamerConfig from_model(const ModelConfig& m, int future_frames = 19);
};

// Decoded sequences from recent frames, flattened oldest first and truncated
// from the front so the next frame keeps room to generate: the flattened
// prefix stays within n_seq minus BOS minus a generation reserve of
// n_slots + 1 tokens. Training and inference share this exact rule.
std::vector<int> flatten_capped_history(std::span<const std::vector<int>> seqs,
                                        int n_seq, int n_slots);

// Fills a [window_m, n_bins] row-major buffer centred so that row
// past_frames() holds frame t. Rows before the first frame replicate it;
// rows past the last frame are zero.
void build_feature_window(const FeatureSequence& features, int t,
                          const StreamerConfig& cfg, float* out);

// Per-frame token source. The session owns all protocol state (history,
// budget, deduplication, the active set); implementations only map an input
// sequence to the next greedy token or to one token per slot row.
class FrameDecoder {
 public:
  virtual ~FrameDecoder() = default;
  virtual void begin_frame(const float* window) = 0;
  // next token id given [history..., BOS, emitted...]
  virtual int next_token(const std::vector<int>& ids) = 0;
  // one token id per input row; rows are slot onset tokens, preceded by BOS
  // when the pedal is queried
  virtual std::vector<int> read_slots(const std::vector<int>& ids) = 0;
};

struct DecodeCounters {
  int64_t seq_anomalies = 0;     // non-onset/EOS from the autoregressive pass
  int64_t slot_anomalies = 0;    // slot answered with a foreign token
  int64_t pedal_anomalies = 0;   // pedal row answered with a non-pedal token
  int64_t deduped_onsets = 0;
  int64_t deduped_offsets = 0;
  int64_t forced_offsets = 0;    // re-onset of an active pitch closed the note
  int64_t budget_stops = 0;      // token budget exhausted before EOS
  int64_t correspondence_drops = 0;  // offset decoded for an inactive pitch

  int64_t total() const {
    return seq_anomalies + slot_anomalies + pedal_anomalies + deduped_onsets +
           deduped_offsets + forced_offsets + budget_stops + correspondence_drops;
  }
};

// Streaming decode session. Frames go in one at a time; events for frame t
// come out once frame t + future_frames has arrived (or at flush). Events
// are deduplicated and onset-offset correspondence is enforced: an offset
// can only be emitted for a pitch in the active set, every emitted onset
// enters it, every emitted offset removes it.
class StreamSession {
 public:
  StreamSession(FrameDecoder& dec, const StreamerConfig& cfg);

  // feed the features of the next frame; returns events once lookahead allows
  std::optional<FrameEvents> push_frame(std::span<const float> frame);
  // end of stream: decode everything still pending (zero-padded lookahead)
  std::vector<FrameEvents> flush();

  // decode one frame from an externally built window, advancing all state;
  // push_frame/flush call this, and offline decoding shares it
  FrameEvents decode_at(int t, const float* window);

  const DecodeCounters& counters() const { return counters_; }
  const ActiveOnsetSet& active() const { return active_; }
  bool pedal_down() const { return pedal_down_; }
  int64_t frames_in() const { return arrivals_; }
  int64_t frames_out() const { return emitted_; }

 private:
  void decode_onsets(int t, FrameEvents& ev);
  void decode_offsets(int t, FrameEvents& ev);
  void decode_mixed(int t, FrameEvents& ev);
  void note_history(std::vector<int> seq);
  std::vector<int> history_ids() const;
  void apply_onset(int t, int pitch, FrameEvents& ev);
  bool apply_offset(int t, int pitch, FrameEvents& ev);
  void apply_pedal_token(int token);
  void build_window(int t, std::vector<float>& out) const;

  FrameDecoder& dec_;
  StreamerConfig cfg_;
  DecodeCounters counters_;
  ActiveOnsetSet active_;
  bool pedal_down_ = false;
  int64_t arrivals_ = 0;
  int64_t emitted_ = 0;
  std::deque<std::vector<float>> frames_;  // frames_[0] is frame base_
  int64_t base_ = 0;
  std::vector<float> first_frame_;
  std::deque<std::vector<int>> history_;   // raw decoded sequences, oldest first
  std::array<int, kNumPitches> last_onset_frame_;
  std::array<int, kNumPitches> last_offset_frame_;
};

// Decodes a complete feature matrix through the same per-frame path the
// session uses; the event stream is identical to feeding frames one by one.
std::vector<FrameEvents> run_offline(const FeatureSequence& features,
                                     FrameDecoder& dec, const StreamerConfig& cfg);

class ModelDecoder : public FrameDecoder {
 public:
  explicit ModelDecoder(const Transcriber<float>& model) : model_(model) {}

  void begin_frame(const float* window) override {
    ag::NoGrad ng;
    enc_ = model_.encode_window(window);
  }
  int next_token(const std::vector<int>& ids) override {
    return model_.greedy_next(false, enc_, ids);
  }
  std::vector<int> read_slots(const std::vector<int>& ids) override {
    ag::NoGrad ng;
    auto logits = model_.decoder_logits(true, enc_, ids);
    std::vector<int> out(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      out[i] = Transcriber<float>::argmax_row(logits, static_cast<int>(i));
    }
    return out;
  }

 private:
  const Transcriber<float>& model_;
  ag::NodePtr<float> enc_;
};

}  // namespace samt
