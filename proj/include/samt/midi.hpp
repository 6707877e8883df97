#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "samt/vocab.hpp"

namespace samt {

// Standard MIDI file reader (format 0 and 1, running status, tempo map).
// Note-on with velocity 0 counts as note-off; CC64 >= 64 presses the sustain
// pedal. Channels are merged. Unterminated notes close at end of track.
Annotation parse_midi(std::span<const uint8_t> bytes);
Annotation read_midi(const std::filesystem::path& path);

// Format-0 writer: 480 ticks per quarter at 120 BPM, so one tick is 1/960 s.
// Notes get velocity 64; pedal intervals become CC64 127/0 pairs. Rejects
// overlapping same-pitch notes.
std::vector<uint8_t> encode_midi(const Annotation& ann);
void write_midi(const std::filesystem::path& path, const Annotation& ann);

}  // namespace samt
