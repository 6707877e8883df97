#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "samt/audio.hpp"
#include "samt/rng.hpp"
#include "samt/vocab.hpp"

namespace samt {

// Synthetic piano-like clips with exact annotations, for tests and small
// training runs. Rendering is fully determined by the seed.
struct ToyDataConfig {
  std::uint64_t seed = 1;
  int n_clips = 32;
  double min_seconds = 2.5;
  double max_seconds = 3.5;
  int min_notes = 3;
  int max_notes = 10;
  int max_polyphony = 4;
  int min_pitch = 36;
  int max_pitch = 96;
  double pedal_prob = 0.35;
  int sample_rate = 16000;

  void validate() const;
};

struct ToyClip {
  AudioClip audio;
  Annotation annotation;
};

// Renders one clip from its own generator; n-th clip of a dataset uses
// rng = Rng(seed).fork(n).
ToyClip render_toy_clip(const ToyDataConfig& cfg, Rng& rng);

std::vector<ToyClip> make_toy_clips(const ToyDataConfig& cfg);

// Writes clip_NNN.wav + clip_NNN.json pairs and a manifest.json listing
// them, and returns the manifest path.
std::filesystem::path write_toy_dataset(const std::filesystem::path& dir,
                                        const ToyDataConfig& cfg);

}  // namespace samt
