#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "samt/vocab.hpp"

namespace samt {

// Notes currently sounding, ordered by ascending (onset frame, pitch), at
// most one entry per pitch. This is what the offset decoder gets queried
// with, so its order must be reproducible.
struct ActiveNote {
  int pitch;
  int onset_frame;
  bool operator==(const ActiveNote&) const = default;
};

class ActiveOnsetSet {
 public:
  bool contains(int pitch) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [pitch](const ActiveNote& a) { return a.pitch == pitch; });
  }
  // false if the pitch is already present
  bool insert(int pitch, int onset_frame) {
    if (contains(pitch)) return false;
    ActiveNote a{pitch, onset_frame};
    auto pos = std::upper_bound(entries_.begin(), entries_.end(), a,
                                [](const ActiveNote& x, const ActiveNote& y) {
                                  return x.onset_frame != y.onset_frame
                                             ? x.onset_frame < y.onset_frame
                                             : x.pitch < y.pitch;
                                });
    entries_.insert(pos, a);
    return true;
  }
  bool erase(int pitch) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [pitch](const ActiveNote& a) { return a.pitch == pitch; });
    if (it == entries_.end()) return false;
    entries_.erase(it);
    return true;
  }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::span<const ActiveNote> entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<ActiveNote> entries_;
};

// Everything the streamer emits for one frame, after deduplication and
// correspondence checks.
struct FrameEvents {
  int t = 0;
  std::vector<int> onsets;   // pitches, ascending
  std::vector<int> offsets;  // pitches, in decode order
  bool pedal_down = false;   // state after this frame
  bool is_final = false;

  bool operator==(const FrameEvents&) const = default;
};

struct NoteEvent {
  enum class OffsetSource { decoded, pedal, max_duration, stream_end };
  int pitch = 0;
  double onset = 0.0;
  double offset = 0.0;
  OffsetSource source = OffsetSource::decoded;
};

std::string offset_source_name(NoteEvent::OffsetSource s);

// JSONL serialization of an event stream, one object per line:
// {"t": frame, "type": "onset"|"offset"|"pedal_on"|"pedal_off", "pitch": n}
// (pitch omitted for pedal lines). Pedal lines appear on state changes.
std::string events_to_jsonl(std::span<const FrameEvents> events);
std::vector<FrameEvents> events_from_jsonl(const std::string& text);

}  // namespace samt
