#include "samt/toydata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "samt/common.hpp"

namespace samt {
namespace {

constexpr double kAttackSeconds = 0.005;
constexpr double kReleaseSeconds = 0.03;
constexpr double kPedalRingCap = 1.5;  // max extra ring while pedal is held
constexpr int kHarmonics = 8;

double pitch_frequency(int pitch) {
  return 440.0 * std::pow(2.0, (pitch - 69) / 12.0);
}

bool overlaps(double a0, double a1, double b0, double b1) {
  return a0 < b1 && b0 < a1;
}

struct DrawnNote {
  int pitch = 0;
  double onset = 0.0;
  double offset = 0.0;
};

void render_note(const DrawnNote& note, double amp,
                 const std::array<double, kHarmonics>& phases, double tau,
                 int sample_rate, std::vector<double>& buf) {
  double f0 = pitch_frequency(note.pitch);
  double ring_end = note.offset;
  double hard_end = ring_end + kReleaseSeconds;
  int64_t i0 = static_cast<int64_t>(std::ceil(note.onset * sample_rate));
  int64_t i1 = std::min<int64_t>(static_cast<int64_t>(buf.size()),
                                 static_cast<int64_t>(std::ceil(hard_end * sample_rate)));
  double nyq_guard = 0.45 * sample_rate;
  for (int64_t i = std::max<int64_t>(0, i0); i < i1; ++i) {
    double t_abs = static_cast<double>(i) / sample_rate;
    double tt = t_abs - note.onset;
    if (tt < 0.0) continue;
    double env = std::min(1.0, tt / kAttackSeconds);
    if (t_abs > ring_end) {
      env *= std::max(0.0, 1.0 - (t_abs - ring_end) / kReleaseSeconds);
    }
    if (env <= 0.0) continue;
    double s = 0.0;
    for (int k = 1; k <= kHarmonics; ++k) {
      double fk = k * f0;
      if (fk >= nyq_guard) break;
      double decay = std::exp(-tt * (1.0 + 0.3 * (k - 1)) / tau);
      s += std::sin(2.0 * std::numbers::pi * fk * tt + phases[k - 1]) * decay /
           (static_cast<double>(k) * k);
    }
    buf[static_cast<size_t>(i)] += amp * env * s;
  }
}

}  // namespace

void ToyDataConfig::validate() const {
  check(n_clips >= 1, "n_clips must be positive");
  check(min_seconds >= 1.0 && max_seconds >= min_seconds,
        "clip length range invalid");
  check(min_notes >= 0 && max_notes >= min_notes, "note count range invalid");
  check(max_polyphony >= 1, "max_polyphony must be positive");
  check(min_pitch >= 0 && max_pitch <= 127 && min_pitch <= max_pitch,
        "pitch range invalid");
  check(pedal_prob >= 0.0 && pedal_prob <= 1.0, "pedal_prob must be in [0,1]");
  check(sample_rate >= 8000, "sample_rate too low");
}

ToyClip render_toy_clip(const ToyDataConfig& cfg, Rng& rng) {
  cfg.validate();
  double seconds = rng.uniform(cfg.min_seconds, cfg.max_seconds);

  bool has_pedal = rng.uniform() < cfg.pedal_prob;
  double pedal_down = 0.0, pedal_up = 0.0;
  if (has_pedal) {
    pedal_down = rng.uniform(0.1, std::max(0.2, seconds * 0.5));
    pedal_up = std::min(pedal_down + rng.uniform(0.3, 1.2), seconds - 0.05);
    if (pedal_up - pedal_down < 0.15) has_pedal = false;
  }
  auto pedal_holds = [&](double t) {
    return has_pedal && t >= pedal_down && t < pedal_up;
  };

  int n_notes = rng.randint(cfg.min_notes, cfg.max_notes);
  std::vector<DrawnNote> notes;
  for (int j = 0; j < n_notes; ++j) {
    for (int attempt = 0; attempt < 60; ++attempt) {
      DrawnNote cand;
      cand.pitch = rng.randint(cfg.min_pitch, cfg.max_pitch);
      cand.onset = rng.uniform(0.05, seconds - 0.5);
      double key_end =
          std::min(cand.onset + rng.uniform(0.15, 1.2), seconds - 0.1);
      if (key_end - cand.onset < 0.1) continue;
      cand.offset = key_end;
      if (pedal_holds(key_end)) {
        cand.offset = std::min(pedal_up, key_end + kPedalRingCap);
      }
      bool ok = true;
      int overlap_count = 0;
      for (const DrawnNote& other : notes) {
        bool hit = overlaps(cand.onset - 0.08, cand.offset + 0.08, other.onset,
                            other.offset);
        if (other.pitch == cand.pitch && hit) {
          ok = false;
          break;
        }
        if (overlaps(cand.onset, cand.offset, other.onset, other.offset)) {
          ++overlap_count;
        }
      }
      if (!ok || overlap_count >= cfg.max_polyphony) continue;
      notes.push_back(cand);
      break;
    }
  }
  std::sort(notes.begin(), notes.end(), [](const DrawnNote& a, const DrawnNote& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });

  std::vector<double> buf(
      static_cast<size_t>(std::llround(seconds * cfg.sample_rate)), 0.0);
  for (const DrawnNote& note : notes) {
    double amp = 0.3 * rng.uniform(0.7, 1.3);
    std::array<double, kHarmonics> phases;
    for (double& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // lower register rings longer
    double tau = 0.12 + 0.9 * (108.0 - note.pitch) / 87.0;
    render_note(note, amp, phases, tau, cfg.sample_rate, buf);
  }

  double peak = 0.0;
  for (double v : buf) peak = std::max(peak, std::abs(v));
  double scale = peak > 1e-9 ? 0.5 / peak : 1.0;

  ToyClip clip;
  clip.audio.sample_rate = cfg.sample_rate;
  clip.audio.samples.resize(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) {
    clip.audio.samples[i] = static_cast<float>(buf[i] * scale);
  }
  for (const DrawnNote& note : notes) {
    clip.annotation.notes.push_back({note.pitch, note.onset, note.offset});
  }
  if (has_pedal) clip.annotation.pedal.push_back({pedal_down, pedal_up});
  return clip;
}

std::vector<ToyClip> make_toy_clips(const ToyDataConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  std::vector<ToyClip> clips;
  clips.reserve(cfg.n_clips);
  for (int i = 0; i < cfg.n_clips; ++i) {
    Rng clip_rng = root.fork(static_cast<uint64_t>(i));
    clips.push_back(render_toy_clip(cfg, clip_rng));
  }
  return clips;
}

std::filesystem::path write_toy_dataset(const std::filesystem::path& dir,
                                        const ToyDataConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::vector<ToyClip> clips = make_toy_clips(cfg);
  nlohmann::json entries = nlohmann::json::array();
  for (size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03zu", i);
    std::string wav = std::string(name) + ".wav";
    std::string ann = std::string(name) + ".json";
    write_wav_float32(dir / wav, clips[i].audio.samples,
                      clips[i].audio.sample_rate);
    write_annotation_json(dir / ann, clips[i].annotation);
    entries.push_back({{"audio", wav}, {"annotation", ann}, {"split", "train"}});
  }
  std::filesystem::path manifest = dir / "manifest.json";
  write_file_text(manifest, nlohmann::json{{"clips", entries}}.dump(2) + "\n");
  return manifest;
}

}  // namespace samt
