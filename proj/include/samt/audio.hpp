#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace samt {

struct AudioClip {
  std::vector<float> samples;  // mono, finite values
  int sample_rate = 16000;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// RIFF/WAVE reader. Accepts PCM16, PCM24, PCM32 and IEEE float32, mono or
// multichannel (channels are averaged). Rejects anything else.
AudioClip read_wav(const std::filesystem::path& path);
AudioClip parse_wav(std::span<const uint8_t> bytes);

// float32 mono writer (format tag 3)
void write_wav_float32(const std::filesystem::path& path,
                       std::span<const float> samples, int sample_rate);
std::vector<uint8_t> encode_wav_float32(std::span<const float> samples,
                                        int sample_rate);

// Polyphase windowed-sinc resampler. Rates must be positive; the conversion
// ratio is reduced to lowest terms so output timing is exact.
std::vector<float> resample(std::span<const float> in, int sr_in, int sr_out);

// read + downmix + resample to target rate + reject non-finite samples
AudioClip ingest_wav(const std::filesystem::path& path, int target_rate = 16000);

}  // namespace samt
