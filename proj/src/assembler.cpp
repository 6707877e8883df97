#include "samt/assembler.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "json.hpp"
#include "samt/common.hpp"

namespace samt {

std::string offset_source_name(NoteEvent::OffsetSource s) {
  switch (s) {
    case NoteEvent::OffsetSource::decoded: return "decoded";
    case NoteEvent::OffsetSource::pedal: return "pedal";
    case NoteEvent::OffsetSource::max_duration: return "max_duration";
    case NoteEvent::OffsetSource::stream_end: return "stream_end";
  }
  return "?";
}

std::vector<NoteEvent> assemble_notes(std::span<const FrameEvents> events,
                                      double frame_period,
                                      AssemblerStats* stats) {
  check(frame_period > 0.0, "frame_period must be positive");
  AssemblerStats local;
  AssemblerStats& st = stats ? *stats : local;

  std::vector<NoteEvent> notes;
  if (events.empty()) return notes;

  for (size_t i = 1; i < events.size(); ++i) {
    check(events[i].t > events[i - 1].t, "frame events out of order");
  }
  const double h = frame_period;
  const double stream_end = (events.back().t + 1) * h;

  struct OffsetTrack {
    std::vector<double> times;
    size_t cursor = 0;
  };
  std::map<int, OffsetTrack> offsets;
  std::map<int, double> first_onset;
  std::vector<std::pair<double, int>> onsets;  // (time, pitch) in decode order
  std::vector<double> lifts;

  bool pedal = false;
  for (const auto& ev : events) {
    double t = ev.t * h;
    for (int p : ev.onsets) {
      onsets.emplace_back(t, p);
      first_onset.try_emplace(p, t);
    }
    for (int p : ev.offsets) offsets[p].times.push_back(t);
    if (pedal && !ev.pedal_down) lifts.push_back(t);
    pedal = ev.pedal_down;
  }

  for (const auto& [o, p] : onsets) {
    NoteEvent note;
    note.pitch = p;
    note.onset = o;

    OffsetTrack* track = nullptr;
    if (auto it = offsets.find(p); it != offsets.end()) track = &it->second;
    double first_on = first_onset.at(p);

    bool matched = false;
    if (track) {
      while (track->cursor < track->times.size() && track->times[track->cursor] < o) {
        if (track->times[track->cursor] < first_on) ++st.orphan_offsets;
        ++track->cursor;
      }
      if (track->cursor < track->times.size()) {
        note.offset = track->times[track->cursor];
        note.source = NoteEvent::OffsetSource::decoded;
        ++track->cursor;
        ++st.decoded_offsets;
        matched = true;
      }
    }
    if (!matched) {
      auto it = std::upper_bound(lifts.begin(), lifts.end(), o);
      if (it != lifts.end() && *it <= o + kMaxNoteSeconds) {
        note.offset = *it;
        note.source = NoteEvent::OffsetSource::pedal;
        ++st.pedal_fallbacks;
      } else if (stream_end < o + kMaxNoteSeconds) {
        note.offset = stream_end;
        note.source = NoteEvent::OffsetSource::stream_end;
        ++st.stream_end_caps;
      } else {
        note.offset = o + kMaxNoteSeconds;
        note.source = NoteEvent::OffsetSource::max_duration;
        ++st.max_duration_caps;
      }
    }
    if (note.offset < o + h) note.offset = o + h;
    notes.push_back(note);
  }

  // offsets of pitches that never had an onset
  for (const auto& [p, track] : offsets) {
    if (!first_onset.count(p)) st.orphan_offsets += track.times.size();
  }

  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });
  return notes;
}

std::vector<std::pair<double, double>> pedal_intervals(
    std::span<const FrameEvents> events, double frame_period) {
  std::vector<std::pair<double, double>> out;
  bool down = false;
  double down_at = 0.0;
  for (const auto& ev : events) {
    double t = ev.t * frame_period;
    if (!down && ev.pedal_down) {
      down = true;
      down_at = t;
    } else if (down && !ev.pedal_down) {
      down = false;
      out.emplace_back(down_at, t);
    }
  }
  if (down && !events.empty()) {
    out.emplace_back(down_at, (events.back().t + 1) * frame_period);
  }
  return out;
}

Annotation notes_to_annotation(std::span<const NoteEvent> notes,
                               std::span<const std::pair<double, double>> pedal) {
  Annotation ann;
  for (const auto& n : notes) ann.notes.push_back({n.pitch, n.onset, n.offset});
  ann.pedal.assign(pedal.begin(), pedal.end());
  return ann;
}

void append_event_lines(const FrameEvents& ev, bool& pedal_state,
                        std::ostream& out) {
  for (int p : ev.onsets) {
    out << nlohmann::json{{"t", ev.t}, {"type", "onset"}, {"pitch", p}}.dump() << "\n";
  }
  for (int p : ev.offsets) {
    out << nlohmann::json{{"t", ev.t}, {"type", "offset"}, {"pitch", p}}.dump() << "\n";
  }
  if (ev.pedal_down != pedal_state) {
    out << nlohmann::json{{"t", ev.t},
                          {"type", ev.pedal_down ? "pedal_on" : "pedal_off"}}
               .dump()
        << "\n";
    pedal_state = ev.pedal_down;
  }
}

std::string events_to_jsonl(std::span<const FrameEvents> events) {
  std::ostringstream out;
  bool pedal = false;
  for (const auto& ev : events) append_event_lines(ev, pedal, out);
  return out.str();
}

std::vector<FrameEvents> events_from_jsonl(const std::string& text) {
  std::vector<FrameEvents> out;
  std::istringstream in(text);
  std::string line;
  bool pedal = false;
  auto frame_at = [&out, &pedal](int t) -> FrameEvents& {
    if (!out.empty() && out.back().t == t) return out.back();
    check(out.empty() || out.back().t < t, "event lines out of order");
    FrameEvents ev;
    ev.t = t;
    ev.pedal_down = pedal;
    out.push_back(ev);
    return out.back();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    int t = j.at("t").get<int>();
    std::string type = j.at("type").get<std::string>();
    FrameEvents& ev = frame_at(t);
    if (type == "onset") {
      ev.onsets.push_back(j.at("pitch").get<int>());
    } else if (type == "offset") {
      ev.offsets.push_back(j.at("pitch").get<int>());
    } else if (type == "pedal_on" || type == "pedal_off") {
      ev.pedal_down = (type == "pedal_on");
      pedal = ev.pedal_down;
    } else {
      fail("unknown event type: " + type);
    }
  }
  return out;
}

// Frame targets -> events -> notes, used to verify that encoding to frame
// targets and assembling back are mutual inverses at frame resolution.
Annotation targets_round_trip(const Annotation& ann, const TargetConfig& cfg) {
  TargetEncoder enc(ann, cfg);
  std::vector<FrameEvents> events;
  int frames = enc.min_frames();
  bool prev_pedal = false;
  for (int t = 0; t < frames; ++t) {
    FrameEvents ev;
    ev.t = t;
    for (const auto& q : enc.quantized()) {
      if (q.on == t) ev.onsets.push_back(q.pitch);
      if (q.off_first == t) ev.offsets.push_back(q.pitch);
    }
    std::sort(ev.onsets.begin(), ev.onsets.end());
    ev.pedal_down = enc.frame(t).pedal_target == Token::pedal(true);
    ev.is_final = (t == frames - 1);
    bool interesting = !ev.onsets.empty() || !ev.offsets.empty() ||
                       ev.pedal_down != prev_pedal || ev.is_final;
    prev_pedal = ev.pedal_down;
    if (interesting) events.push_back(std::move(ev));
  }
  // silent frames matter only through the final stream length, so re-add the
  // last frame index via is_final above
  std::vector<FrameEvents> dense;
  dense.reserve(events.size());
  int last_t = -1;
  for (auto& ev : events) {
    check(ev.t > last_t, "round trip produced out-of-order frames");
    last_t = ev.t;
    dense.push_back(std::move(ev));
  }
  auto notes = assemble_notes(dense, cfg.frame_period);
  auto pedal = pedal_intervals(dense, cfg.frame_period);
  return notes_to_annotation(notes, pedal);
}

}  // namespace samt
