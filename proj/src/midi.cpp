#include "samt/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <optional>

#include "samt/common.hpp"

namespace samt {

namespace {

struct Cursor {
  const uint8_t* p;
  const uint8_t* end;

  uint8_t u8() {
    if (p >= end) fail("unexpected end of MIDI data");
    return *p++;
  }
  uint32_t u16be() {
    uint32_t a = u8(), b = u8();
    return (a << 8) | b;
  }
  uint32_t u32be() {
    uint32_t a = u16be(), b = u16be();
    return (a << 16) | b;
  }
  uint32_t varint() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      uint8_t b = u8();
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    fail("MIDI varint longer than 4 bytes");
  }
  void skip(uint32_t n) {
    if (end - p < static_cast<ptrdiff_t>(n)) fail("unexpected end of MIDI data");
    p += n;
  }
};

struct RawEvent {
  int64_t tick;
  int type;  // 0 note-off, 1 note-on, 2 pedal-down, 3 pedal-up
  int pitch;
  size_t order;
};

void push_varint(std::vector<uint8_t>& out, uint32_t v) {
  uint8_t bytes[4];
  int n = 0;
  do {
    bytes[n++] = v & 0x7f;
    v >>= 7;
  } while (v != 0);
  for (int i = n - 1; i >= 1; --i) out.push_back(bytes[i] | 0x80);
  out.push_back(bytes[0]);
}

}  // namespace

Annotation parse_midi(std::span<const uint8_t> bytes) {
  Cursor c{bytes.data(), bytes.data() + bytes.size()};
  if (bytes.size() < 14 || std::memcmp(c.p, "MThd", 4) != 0) fail("not a MIDI file");
  c.skip(4);
  uint32_t hdr_len = c.u32be();
  check(hdr_len >= 6, "MIDI header too short");
  uint32_t format = c.u16be();
  uint32_t ntrks = c.u16be();
  uint32_t division = c.u16be();
  c.skip(hdr_len - 6);
  check(format <= 1, "unsupported MIDI format " + std::to_string(format));
  check((division & 0x8000) == 0, "SMPTE time division is not supported");
  check(division > 0, "MIDI division must be positive");

  std::vector<RawEvent> events;
  std::vector<std::pair<int64_t, uint32_t>> tempi;  // (tick, us per quarter)
  size_t order = 0;

  for (uint32_t trk = 0; trk < ntrks; ++trk) {
    if (c.p + 8 > c.end) break;  // tolerate missing declared tracks
    check(std::memcmp(c.p, "MTrk", 4) == 0, "expected MTrk chunk");
    c.skip(4);
    uint32_t len = c.u32be();
    Cursor tc{c.p, c.p + len};
    check(tc.end <= c.end, "truncated MIDI track");
    c.skip(len);

    int64_t tick = 0;
    uint8_t status = 0;
    while (tc.p < tc.end) {
      tick += tc.varint();
      uint8_t b = tc.u8();
      if (b & 0x80) {
        status = b;
      } else {
        check(status != 0, "MIDI data byte without running status");
        --tc.p;
      }
      uint8_t hi = status & 0xf0;
      if (hi == 0x80 || hi == 0x90) {
        uint8_t pitch = tc.u8();
        uint8_t vel = tc.u8();
        bool on = (hi == 0x90) && vel > 0;
        events.push_back({tick, on ? 1 : 0, pitch, order++});
      } else if (hi == 0xb0) {
        uint8_t ctrl = tc.u8();
        uint8_t val = tc.u8();
        if (ctrl == 64) {
          events.push_back({tick, val >= 64 ? 2 : 3, -1, order++});
        }
      } else if (hi == 0xa0 || hi == 0xe0) {
        tc.skip(2);
      } else if (hi == 0xc0 || hi == 0xd0) {
        tc.skip(1);
      } else if (status == 0xff) {
        uint8_t type = tc.u8();
        uint32_t mlen = tc.varint();
        if (type == 0x51 && mlen == 3) {
          uint32_t us = (tc.u8() << 16);
          us |= tc.u8() << 8;
          us |= tc.u8();
          tempi.emplace_back(tick, us);
        } else if (type == 0x2f) {
          tc.skip(mlen);
          events.push_back({tick, -1, -1, order++});  // marks end of track
          break;
        } else {
          tc.skip(mlen);
        }
      } else if (status == 0xf0 || status == 0xf7) {
        tc.skip(tc.varint());
      } else {
        fail("unsupported MIDI status byte");
      }
    }
    events.push_back({tick, -1, -1, order++});
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.tick < b.tick; });
  std::stable_sort(tempi.begin(), tempi.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  // tick -> seconds through the tempo map (default 120 BPM before the first
  // tempo event)
  auto seconds_at = [&](int64_t tick) {
    double sec = 0.0;
    int64_t prev_tick = 0;
    uint32_t us = 500000;
    for (const auto& [tt, tus] : tempi) {
      if (tt >= tick) break;
      sec += static_cast<double>(tt - prev_tick) * us * 1e-6 / division;
      prev_tick = tt;
      us = tus;
    }
    sec += static_cast<double>(tick - prev_tick) * us * 1e-6 / division;
    return sec;
  };

  Annotation ann;
  std::map<int, double> open_notes;  // pitch -> onset seconds
  std::optional<double> pedal_down;
  double last_time = 0.0;
  for (const auto& e : events) {
    double t = seconds_at(e.tick);
    last_time = std::max(last_time, t);
    if (e.type == 1) {
      auto it = open_notes.find(e.pitch);
      if (it != open_notes.end()) {
        if (t > it->second) ann.notes.push_back({e.pitch, it->second, t});
        open_notes.erase(it);
      }
      open_notes[e.pitch] = t;
    } else if (e.type == 0) {
      auto it = open_notes.find(e.pitch);
      if (it != open_notes.end()) {
        if (t > it->second) ann.notes.push_back({e.pitch, it->second, t});
        open_notes.erase(it);
      }
    } else if (e.type == 2) {
      if (!pedal_down) pedal_down = t;
    } else if (e.type == 3) {
      if (pedal_down) {
        ann.pedal.emplace_back(*pedal_down, t);
        pedal_down.reset();
      }
    }
  }
  for (const auto& [pitch, on] : open_notes) {
    ann.notes.push_back({pitch, on, last_time});
  }
  if (pedal_down) ann.pedal.emplace_back(*pedal_down, last_time);

  std::sort(ann.notes.begin(), ann.notes.end(),
            [](const Annotation::Note& a, const Annotation::Note& b) {
              return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
            });
  std::sort(ann.pedal.begin(), ann.pedal.end());
  return ann;
}

Annotation read_midi(const std::filesystem::path& path) {
  return parse_midi(read_file_bytes(path));
}

std::vector<uint8_t> encode_midi(const Annotation& ann) {
  // ticks at 480 per quarter, 120 BPM: one tick is 1/960 s
  auto to_tick = [](double sec) { return std::llround(sec * 960.0); };

  // reject overlapping same-pitch notes
  std::map<int, std::vector<std::pair<double, double>>> by_pitch;
  for (const auto& n : ann.notes) {
    check(n.offset > n.onset, "note with non-positive duration");
    by_pitch[n.pitch].emplace_back(n.onset, n.offset);
  }
  for (auto& [pitch, spans] : by_pitch) {
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i) {
      check(spans[i].first >= spans[i - 1].second,
            "overlapping notes at pitch " + std::to_string(pitch));
    }
  }

  struct Ev {
    int64_t tick;
    int prio;  // note-offs and pedal lifts sort before note-ons at equal tick
    uint8_t status, d1, d2;
  };
  std::vector<Ev> evs;
  for (const auto& n : ann.notes) {
    check(n.pitch >= 0 && n.pitch < 128, "pitch out of MIDI range");
    int64_t on = to_tick(n.onset), off = to_tick(n.offset);
    if (off <= on) off = on + 1;
    evs.push_back({on, 2, 0x90, static_cast<uint8_t>(n.pitch), 64});
    evs.push_back({off, 0, 0x80, static_cast<uint8_t>(n.pitch), 0});
  }
  for (const auto& p : ann.pedal) {
    check(p.second >= p.first, "pedal interval reversed");
    evs.push_back({to_tick(p.first), 1, 0xb0, 64, 127});
    evs.push_back({to_tick(p.second), 1, 0xb0, 64, 0});
  }
  std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.prio < b.prio;
  });

  std::vector<uint8_t> track;
  push_varint(track, 0);  // tempo meta at tick 0: 500000 us per quarter
  track.insert(track.end(), {0xff, 0x51, 0x03, 0x07, 0xa1, 0x20});
  int64_t prev = 0;
  for (const auto& e : evs) {
    push_varint(track, static_cast<uint32_t>(e.tick - prev));
    prev = e.tick;
    track.push_back(e.status);
    track.push_back(e.d1);
    track.push_back(e.d2);
  }
  push_varint(track, 0);
  track.insert(track.end(), {0xff, 0x2f, 0x00});

  std::vector<uint8_t> out;
  auto push_u16 = [&out](uint32_t v) {
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
  };
  auto push_u32 = [&out](uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
  };
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  push_u32(6);
  push_u16(0);
  push_u16(1);
  push_u16(480);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  push_u32(static_cast<uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

void write_midi(const std::filesystem::path& path, const Annotation& ann) {
  write_file_bytes(path, encode_midi(ann));
}

}  // namespace samt
