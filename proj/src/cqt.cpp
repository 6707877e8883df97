#include "samt/cqt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "samt/common.hpp"

namespace samt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Sample access with reflection before index 0 and zeros at/past the end.
// `prefix` always holds the first samples of the stream; `data` is a window
// [data_start, data_start + data_len) further along. `end` < 0 while the
// stream is still open.
struct SampleSource {
  const float* prefix;
  int64_t prefix_len;
  const float* data;
  int64_t data_start;
  int64_t data_len;
  int64_t end;

  float at(int64_t i) const {
    if (i < 0) {
      int64_t n = end >= 0 ? end : prefix_len;
      if (n <= 1) return n == 1 ? prefix[0] : 0.0f;
      int64_t period = 2 * (n - 1);
      i = (-i) % period;
      if (i >= n) i = period - i;
      // reflected index is near the stream head by construction
    }
    if (end >= 0 && i >= end) return 0.0f;
    if (i < prefix_len) return prefix[i];
    if (i >= data_start && i < data_start + data_len) {
      return data[i - data_start];
    }
    fail("sample index " + std::to_string(i) + " outside buffered range");
  }
};

void fill_window(const SampleSource& src, int64_t center, float* out) {
  int64_t start = center - kCqtWindow / 2;
  for (int i = 0; i < kCqtWindow; ++i) out[i] = src.at(start + i);
}

}  // namespace

double CqtConfig::bin_frequency(int bin) const {
  return f_min * std::pow(2.0, static_cast<double>(bin) / bins_per_octave);
}

double CqtConfig::q_factor() const {
  return 1.0 / (std::pow(2.0, 1.0 / bins_per_octave) - 1.0);
}

void CqtConfig::validate() const {
  check(f_min > 0.0, "f_min must be positive");
  check(bins_per_octave > 0, "bins_per_octave must be positive");
  check(n_bins == 352, "n_bins must be 352");
  check(hop > 0, "hop must be positive");
  check(sample_rate > 0, "sample_rate must be positive");
  check(db_floor < 0.0, "db_floor must be negative");
  double top = bin_frequency(n_bins - 1);
  check(top < sample_rate / 2.0,
        "top bin " + std::to_string(top) + " Hz reaches Nyquist");
  check(kCqtWindow >= sample_rate / f_min,
        "analysis window shorter than one period of f_min");
}

double amplitude_to_db(double magnitude, double ref, double db_floor) {
  if (magnitude <= 0.0) return db_floor;
  double db = 20.0 * std::log10(magnitude / ref);
  return std::clamp(db, db_floor, 0.0);
}

CqtKernelBank CqtKernelBank::build(const CqtConfig& config) {
  config.validate();
  CqtKernelBank bank;
  bank.config = config;
  bank.kernels.resize(config.n_bins);
  double q = config.q_factor();
  for (int b = 0; b < config.n_bins; ++b) {
    double f = config.bin_frequency(b);
    double natural = std::ceil(q * config.sample_rate / f);
    int len = static_cast<int>(std::min<double>(natural, kCqtWindow));
    Kernel& k = bank.kernels[b];
    k.offset = (kCqtWindow - len) / 2;
    k.re.resize(len);
    k.im.resize(len);
    double wsum = 0.0;
    std::vector<double> taper(len);
    for (int n = 0; n < len; ++n) {
      double w = len > 1 ? 0.5 - 0.5 * std::cos(2.0 * kPi * n / (len - 1)) : 1.0;
      taper[n] = w;
      wsum += w;
    }
    double centre = 0.5 * (len - 1);
    double omega = 2.0 * kPi * f / config.sample_rate;
    for (int n = 0; n < len; ++n) {
      double phase = omega * (n - centre);
      double w = taper[n] / wsum;
      k.re[n] = w * std::cos(phase);
      k.im[n] = -w * std::sin(phase);
    }
  }
  return bank;
}

void CqtKernelBank::frame_magnitudes(const float* window, double* out) const {
  for (size_t b = 0; b < kernels.size(); ++b) {
    const Kernel& k = kernels[b];
    const float* x = window + k.offset;
    double re = 0.0, im = 0.0;
    size_t len = k.re.size();
    for (size_t n = 0; n < len; ++n) {
      double v = x[n];
      re += v * k.re[n];
      im += v * k.im[n];
    }
    out[b] = std::sqrt(re * re + im * im);
  }
}

FeatureSequence compute_cqt(const AudioClip& clip, const CqtKernelBank& bank) {
  const CqtConfig& cfg = bank.config;
  FeatureSequence fs;
  fs.n_bins = cfg.n_bins;
  fs.frame_period = cfg.frame_period();
  int64_t n = static_cast<int64_t>(clip.samples.size());
  if (n == 0) return fs;
  check(clip.sample_rate == cfg.sample_rate,
        "clip sample rate does not match analysis configuration");

  int64_t frames = n / cfg.hop + 1;
  std::vector<double> mags(static_cast<size_t>(frames) * cfg.n_bins);
  std::vector<float> window(kCqtWindow);
  SampleSource src{clip.samples.data(), n, clip.samples.data(), 0, n, n};
  for (int64_t t = 0; t < frames; ++t) {
    fill_window(src, t * cfg.hop, window.data());
    bank.frame_magnitudes(window.data(), mags.data() + t * cfg.n_bins);
  }

  double ref = 1.0;
  if (cfg.db_ref == CqtConfig::DbRef::clip_max) {
    double peak = 0.0;
    for (double m : mags) peak = std::max(peak, m);
    if (peak > 0.0) ref = peak;
  }
  fs.data.resize(mags.size());
  for (size_t i = 0; i < mags.size(); ++i) {
    fs.data[i] = static_cast<float>(amplitude_to_db(mags[i], ref, cfg.db_floor));
  }
  return fs;
}

FeatureSequence compute_cqt(const AudioClip& clip, const CqtConfig& config) {
  return compute_cqt(clip, CqtKernelBank::build(config));
}

CqtStreamer::CqtStreamer(std::shared_ptr<const CqtKernelBank> bank)
    : bank_(std::move(bank)) {
  check(bank_ != nullptr, "null kernel bank");
}

CqtStreamer::CqtStreamer(const CqtConfig& config)
    : CqtStreamer(std::make_shared<const CqtKernelBank>(CqtKernelBank::build(config))) {}

void CqtStreamer::feed(std::span<const float> chunk) {
  check(!finished_, "feed after finish");
  int64_t half = kCqtWindow / 2;
  for (float v : chunk) {
    if (static_cast<int64_t>(prefix_.size()) <= half) prefix_.push_back(v);
    buf_.push_back(v);
  }
  received_ += static_cast<int64_t>(chunk.size());
}

std::vector<std::vector<float>> CqtStreamer::take_ready(bool ended) {
  const CqtConfig& cfg = bank_->config;
  int64_t half = kCqtWindow / 2;
  int64_t total_frames = received_ > 0 ? received_ / cfg.hop + 1 : 0;

  std::vector<std::vector<float>> out;
  std::vector<float> window(kCqtWindow);
  for (;;) {
    if (received_ == 0) break;
    int64_t center = emitted_ * cfg.hop;
    if (ended) {
      if (emitted_ >= total_frames) break;
    } else {
      // the window itself plus the farthest index start reflection can reach
      int64_t need = std::max(center + half, half - center + 1);
      if (received_ < need) break;
    }
    SampleSource src{prefix_.data(), static_cast<int64_t>(prefix_.size()),
                     buf_.data(),    base_,
                     static_cast<int64_t>(buf_.size()),
                     ended ? received_ : -1};
    fill_window(src, center, window.data());
    std::vector<float> row(cfg.n_bins);
    std::vector<double> mags(cfg.n_bins);
    bank_->frame_magnitudes(window.data(), mags.data());
    for (int b = 0; b < cfg.n_bins; ++b) {
      row[b] = static_cast<float>(amplitude_to_db(mags[b], 1.0, cfg.db_floor));
    }
    out.push_back(std::move(row));
    ++emitted_;

    // retire samples no longer reachable by any future window
    int64_t keep_from = emitted_ * cfg.hop - half;
    if (keep_from > base_ + 16384) {
      int64_t drop = keep_from - base_;
      buf_.erase(buf_.begin(), buf_.begin() + drop);
      base_ += drop;
    }
  }
  return out;
}

std::vector<std::vector<float>> CqtStreamer::poll() {
  if (finished_) return {};
  return take_ready(false);
}

std::vector<std::vector<float>> CqtStreamer::finish() {
  check(!finished_, "finish called twice");
  finished_ = true;
  return take_ready(true);
}

void write_feature_dump(const std::filesystem::path& path,
                        const FeatureSequence& features, int hop) {
  std::vector<uint8_t> bytes;
  bytes.reserve(16 + features.data.size() * 4);
  bytes.insert(bytes.end(), {'C', 'Q', 'T', 'F'});
  auto push_u32 = [&bytes](uint32_t x) {
    bytes.push_back(x & 0xff);
    bytes.push_back((x >> 8) & 0xff);
    bytes.push_back((x >> 16) & 0xff);
    bytes.push_back((x >> 24) & 0xff);
  };
  push_u32(1);
  push_u32(static_cast<uint32_t>(features.n_bins));
  push_u32(static_cast<uint32_t>(hop));
  size_t base = bytes.size();
  bytes.resize(base + features.data.size() * 4);
  std::memcpy(bytes.data() + base, features.data.data(), features.data.size() * 4);
  write_file_bytes(path, bytes);
}

FeatureSequence read_feature_dump(const std::filesystem::path& path,
                                  int sample_rate) {
  auto bytes = read_file_bytes(path);
  check(bytes.size() >= 16, "feature dump too short");
  check(std::memcmp(bytes.data(), "CQTF", 4) == 0, "bad feature dump magic");
  auto read_u32 = [&bytes](size_t at) {
    return static_cast<uint32_t>(bytes[at]) | (bytes[at + 1] << 8) |
           (bytes[at + 2] << 16) | (static_cast<uint32_t>(bytes[at + 3]) << 24);
  };
  uint32_t version = read_u32(4);
  check(version == 1, "unsupported feature dump version " + std::to_string(version));
  FeatureSequence fs;
  fs.n_bins = static_cast<int>(read_u32(8));
  uint32_t hop = read_u32(12);
  check(fs.n_bins > 0, "feature dump with zero bins");
  check(hop > 0, "feature dump with zero hop");
  fs.frame_period = static_cast<double>(hop) / sample_rate;
  size_t payload = bytes.size() - 16;
  check(payload % (4 * fs.n_bins) == 0, "feature dump payload not frame-aligned");
  fs.data.resize(payload / 4);
  std::memcpy(fs.data.data(), bytes.data() + 16, payload);
  return fs;
}

}  // namespace samt
