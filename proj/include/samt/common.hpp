#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace samt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// Frames are 20 ms wide under the default analysis settings; most timing
// helpers take the period explicitly so non-default hops keep working.
inline constexpr double kDefaultFramePeriod = 0.020;

inline int time_to_frame(double seconds, double frame_period) {
  return static_cast<int>(std::llround(seconds / frame_period));
}

inline double frame_to_time(int frame, double frame_period) {
  return frame * frame_period;
}

// Worker cap for clip-parallel batch work. 0 or unset means "one thread".
inline int env_thread_cap() {
  const char* v = std::getenv("STREAM_AMT_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (end == v || n < 1) return 1;
  if (n > 256) n = 256;
  return static_cast<int>(n);
}

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("short write: " + path.string());
}

inline std::string read_file_text(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_file_text(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open file for writing: " + path.string());
  out << text;
  if (!out) fail("short write: " + path.string());
}

}  // namespace samt
