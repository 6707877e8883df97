#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "samt/audio.hpp"

namespace samt {

// Log-frequency analysis over the piano range: 4 bins per semitone from A0,
// constant Q, fixed 20 ms hop at 16 kHz.
struct CqtConfig {
  double f_min = 27.5;
  int bins_per_octave = 48;
  int n_bins = 352;
  int hop = 320;
  int sample_rate = 16000;
  double db_floor = -80.0;

  // Reference for dB conversion. Batch extraction defaults to the clip peak;
  // streaming must use full scale because the peak is unknowable mid-stream.
  enum class DbRef { clip_max, full_scale };
  DbRef db_ref = DbRef::clip_max;

  double frame_period() const { return static_cast<double>(hop) / sample_rate; }
  double bin_frequency(int bin) const;
  double q_factor() const;

  // throws Error on out-of-range or inconsistent settings
  void validate() const;
};

// 20*log10(magnitude/ref) clamped to [db_floor, 0]
double amplitude_to_db(double magnitude, double ref, double db_floor);

constexpr int kCqtWindow = 2048;  // analysis window, samples

// One complex kernel per bin, Hann-tapered, centered in the analysis window.
// Kernels longer than the window are truncated to it.
struct CqtKernelBank {
  struct Kernel {
    int offset;              // placement of the first tap inside the window
    std::vector<double> re;  // already normalized by the taper sum
    std::vector<double> im;
  };
  CqtConfig config;
  std::vector<Kernel> kernels;

  static CqtKernelBank build(const CqtConfig& config);

  // magnitudes for one filled window, one value per bin
  void frame_magnitudes(const float* window, double* out) const;
};

struct FeatureSequence {
  std::vector<float> data;  // row-major, frames() x n_bins
  int n_bins = 0;
  double frame_period = 0.020;

  size_t frames() const { return n_bins > 0 ? data.size() / n_bins : 0; }
  std::span<const float> row(size_t t) const {
    return std::span<const float>(data).subspan(t * n_bins, n_bins);
  }
  std::span<float> row(size_t t) {
    return std::span<float>(data).subspan(t * n_bins, n_bins);
  }
};

// Centered framing: frame t is the window around sample t*hop, the clip start
// is reflection-padded and the end zero-padded. A clip of n samples yields
// floor(n/hop)+1 frames (0 frames when empty).
FeatureSequence compute_cqt(const AudioClip& clip, const CqtKernelBank& bank);
FeatureSequence compute_cqt(const AudioClip& clip, const CqtConfig& config);

// Incremental extraction over arbitrary chunk splits. Emits a frame as soon
// as its window is fully covered by received samples; finish() zero-pads the
// tail and flushes the rest. Frame values are bit-identical to compute_cqt
// with DbRef::full_scale on the concatenated input.
class CqtStreamer {
 public:
  explicit CqtStreamer(std::shared_ptr<const CqtKernelBank> bank);
  explicit CqtStreamer(const CqtConfig& config);

  void feed(std::span<const float> chunk);
  // moves all ready frames out; each row has n_bins values
  std::vector<std::vector<float>> poll();
  // marks end of stream and returns the remaining frames
  std::vector<std::vector<float>> finish();

  int64_t frames_emitted() const { return emitted_; }
  int64_t samples_received() const { return received_; }

 private:
  std::vector<std::vector<float>> take_ready(bool ended);

  std::shared_ptr<const CqtKernelBank> bank_;
  std::vector<float> prefix_;   // first samples, kept for start reflection
  std::vector<float> buf_;      // rolling tail, buf_[0] is absolute index base_
  int64_t base_ = 0;
  int64_t received_ = 0;
  int64_t emitted_ = 0;
  bool finished_ = false;
};

// Binary feature dump: magic "CQTF", u32 version, u32 n_bins, u32 hop, then
// float32 little-endian row-major frames.
void write_feature_dump(const std::filesystem::path& path,
                        const FeatureSequence& features, int hop);
FeatureSequence read_feature_dump(const std::filesystem::path& path,
                                  int sample_rate = 16000);

}  // namespace samt
