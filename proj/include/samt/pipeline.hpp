#pragma once

#include <utility>
#include <vector>

#include "samt/assembler.hpp"
#include "samt/audio.hpp"
#include "samt/cqt.hpp"
#include "samt/events.hpp"
#include "samt/model.hpp"
#include "samt/streamer.hpp"

namespace samt {

// End-to-end output for one clip: the per-frame event stream plus the
// assembled note list and pedal intervals derived from it.
struct TranscribeResult {
  std::vector<FrameEvents> events;
  std::vector<NoteEvent> notes;
  std::vector<std::pair<double, double>> pedal;
  DecodeCounters counters;
  AssemblerStats assembler;
  double frame_period = kDefaultFramePeriod;
};

TranscribeResult transcribe_features(const FeatureSequence& features,
                                     const Transcriber<float>& model,
                                     const StreamerConfig& cfg);

// Computes features with the full-scale dB reference (the only reference a
// causal stream can use) and transcribes them.
TranscribeResult transcribe_clip(const AudioClip& clip,
                                 const Transcriber<float>& model,
                                 const CqtConfig& cqt_cfg,
                                 const StreamerConfig& cfg);

Annotation transcription_to_annotation(const TranscribeResult& result);

}  // namespace samt
