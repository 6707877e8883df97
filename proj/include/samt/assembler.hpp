#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "samt/events.hpp"
#include "samt/vocab.hpp"

namespace samt {

inline constexpr double kMaxNoteSeconds = 4.0;

struct AssemblerStats {
  int64_t decoded_offsets = 0;
  int64_t pedal_fallbacks = 0;
  int64_t max_duration_caps = 0;
  int64_t stream_end_caps = 0;
  int64_t orphan_offsets = 0;  // offsets with no preceding onset of that pitch
};

// Pairs onset and offset events into notes. For an onset at time o the
// offset is, in order of preference: the earliest unconsumed same-pitch
// offset event after o; the earliest pedal lift in (o, o+4]; min(o+4,
// stream end). Pedal lifts close any number of notes. Durations are at
// least one frame.
std::vector<NoteEvent> assemble_notes(std::span<const FrameEvents> events,
                                      double frame_period,
                                      AssemblerStats* stats = nullptr);

// pedal intervals implied by the per-frame pedal state (initially up)
std::vector<std::pair<double, double>> pedal_intervals(
    std::span<const FrameEvents> events, double frame_period);

Annotation notes_to_annotation(std::span<const NoteEvent> notes,
                               std::span<const std::pair<double, double>> pedal);

// one JSONL line per event; pedal lines appear only on state changes, with
// pedal_state carrying the last written state across calls
void append_event_lines(const FrameEvents& ev, bool& pedal_state,
                        std::ostream& out);

}  // namespace samt
