#include "samt/audio.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "samt/common.hpp"

namespace samt {

namespace {

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void push_u32le(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}

void push_u16le(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioClip parse_wav(std::span<const uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail("not a RIFF/WAVE file");
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* hdr = bytes.data() + pos;
    uint32_t chunk_len = read_u32le(hdr + 4);
    const uint8_t* body = hdr + 8;
    if (pos + 8 + chunk_len > bytes.size()) fail("truncated WAVE chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) fail("fmt chunk too short");
      format = read_u16le(body);
      channels = read_u16le(body + 2);
      sample_rate = read_u32le(body + 4);
      bits = read_u16le(body + 14);
      if (format == kFormatExtensible) {
        if (chunk_len < 40) fail("extensible fmt chunk too short");
        format = read_u16le(body + 24);  // first two bytes of the SubFormat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) fail("WAVE file has no fmt chunk");
  if (data == nullptr) fail("WAVE file has no data chunk");
  if (channels == 0) fail("WAVE file has zero channels");
  if (sample_rate == 0) fail("WAVE file has zero sample rate");

  size_t bytes_per_sample;
  if (format == kFormatPcm && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == kFormatPcm && bits == 24) {
    bytes_per_sample = 3;
  } else if (format == kFormatPcm && bits == 32) {
    bytes_per_sample = 4;
  } else if (format == kFormatFloat && bits == 32) {
    bytes_per_sample = 4;
  } else {
    fail("unsupported WAVE encoding: format " + std::to_string(format) + ", " +
         std::to_string(bits) + " bits");
  }

  size_t frame_bytes = bytes_per_sample * channels;
  size_t n_frames = data_len / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(n_frames);
  const double inv_channels = 1.0 / channels;

  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    const uint8_t* f = data + i * frame_bytes;
    for (int c = 0; c < channels; ++c) {
      const uint8_t* s = f + c * bytes_per_sample;
      double x;
      if (format == kFormatFloat) {
        float v;
        std::memcpy(&v, s, 4);
        x = v;
      } else if (bits == 16) {
        int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
        x = v / 32768.0;
      } else if (bits == 24) {
        int32_t v = s[0] | (s[1] << 8) | (s[2] << 16);
        if (v & 0x800000) v -= 0x1000000;
        x = v / 8388608.0;
      } else {
        int32_t v;
        std::memcpy(&v, s, 4);
        x = v / 2147483648.0;
      }
      acc += x;
    }
    float y = static_cast<float>(acc * inv_channels);
    if (!std::isfinite(y)) fail("WAVE file contains non-finite samples");
    clip.samples[i] = y;
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  return parse_wav(read_file_bytes(path));
}

std::vector<uint8_t> encode_wav_float32(std::span<const float> samples,
                                        int sample_rate) {
  check(sample_rate > 0, "sample rate must be positive");
  std::vector<uint8_t> out;
  out.reserve(58 + samples.size() * 4);
  uint32_t data_len = static_cast<uint32_t>(samples.size() * 4);

  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  push_u32le(out, 4 + 8 + 16 + 8 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  push_u32le(out, 16);
  push_u16le(out, kFormatFloat);
  push_u16le(out, 1);  // mono
  push_u32le(out, static_cast<uint32_t>(sample_rate));
  push_u32le(out, static_cast<uint32_t>(sample_rate) * 4);
  push_u16le(out, 4);
  push_u16le(out, 32);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  push_u32le(out, data_len);
  size_t base = out.size();
  out.resize(base + data_len);
  std::memcpy(out.data() + base, samples.data(), data_len);
  return out;
}

void write_wav_float32(const std::filesystem::path& path,
                       std::span<const float> samples, int sample_rate) {
  auto bytes = encode_wav_float32(samples, sample_rate);
  write_file_bytes(path, bytes);
}

std::vector<float> resample(std::span<const float> in, int sr_in, int sr_out) {
  check(sr_in > 0 && sr_out > 0, "sample rates must be positive");
  if (sr_in == sr_out) return std::vector<float>(in.begin(), in.end());
  if (in.empty()) return {};

  int64_t g = std::gcd(sr_in, sr_out);
  int64_t up = sr_out / g;    // output samples per...
  int64_t down = sr_in / g;   // ...this many input samples

  // Anti-alias cutoff sits just below the narrower Nyquist, in cycles per
  // input sample. The kernel half-width widens when downsampling so the
  // stopband stays put.
  double ratio = static_cast<double>(sr_out) / sr_in;
  double scale = std::min(1.0, ratio);
  double fc = 0.475 * scale;
  double half_width = 32.0 / scale;
  int64_t hw = static_cast<int64_t>(std::ceil(half_width));

  int64_t n_in = static_cast<int64_t>(in.size());
  int64_t n_out = (n_in * up + down - 1) / down;  // ceil: spans the input
  std::vector<float> out(static_cast<size_t>(n_out));

  const double pi = 3.14159265358979323846;
  for (int64_t n = 0; n < n_out; ++n) {
    // exact rational position of output sample n in input-sample units
    int64_t num = n * down;
    int64_t i0 = num / up;
    double frac = static_cast<double>(num % up) / static_cast<double>(up);
    double acc = 0.0, wsum = 0.0;
    for (int64_t k = i0 - hw; k <= i0 + hw + 1; ++k) {
      double u = static_cast<double>(k - i0) - frac;
      double au = std::abs(u) / half_width;
      if (au >= 1.0) continue;
      double sinc = (u == 0.0) ? 1.0 : std::sin(2.0 * pi * fc * u) / (2.0 * pi * fc * u);
      double win = 0.5 + 0.5 * std::cos(pi * au);
      double w = sinc * win;
      wsum += w;
      if (k >= 0 && k < n_in) acc += w * in[static_cast<size_t>(k)];
    }
    out[static_cast<size_t>(n)] = static_cast<float>(wsum > 0.0 ? acc / wsum : 0.0);
  }
  return out;
}

AudioClip ingest_wav(const std::filesystem::path& path, int target_rate) {
  AudioClip clip = read_wav(path);
  if (clip.sample_rate != target_rate) {
    clip.samples = resample(clip.samples, clip.sample_rate, target_rate);
    clip.sample_rate = target_rate;
  }
  return clip;
}

}  // namespace samt
