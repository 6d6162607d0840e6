#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamkit {

// All timestamps and durations are signed nanoseconds.
using Nanos = int64_t;

constexpr Nanos kMillisecond = 1'000'000;
constexpr Nanos kSecond = 1'000'000'000;

constexpr Nanos millis(int64_t ms) { return ms * kMillisecond; }
constexpr Nanos seconds(double s) { return static_cast<Nanos>(s * 1e9); }

using Bytes = std::vector<uint8_t>;

enum class Errc {
  malformed_bitstream,
  out_of_order_frame,
  empty_buffer,
  truncated_packet,
  bad_version,
  malformed_message,
  illegal_transition,
  session_not_found,
  foreign_ssrc,
  unknown_address,
  duplicate_stage,
  incomplete_trace,
  empty_series,
  no_samples,
  recovery_timeout,
  config_error,
  schema_mismatch,
  io_error,
};

const char* errc_name(Errc e);

class StreamError : public std::runtime_error {
 public:
  StreamError(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

struct NetAddress {
  std::string host;
  uint16_t port = 0;

  bool operator==(const NetAddress&) const = default;
  std::string str() const { return host + ":" + std::to_string(port); }
};

struct Datagram {
  NetAddress from;
  NetAddress to;
  Bytes payload;
};

// Big-endian byte packing used by every wire format in the project.
inline void put_u16(Bytes& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}
inline void put_u32(Bytes& b, uint32_t v) {
  b.push_back(static_cast<uint8_t>(v >> 24));
  b.push_back(static_cast<uint8_t>(v >> 16));
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}
inline void put_u64(Bytes& b, uint64_t v) {
  put_u32(b, static_cast<uint32_t>(v >> 32));
  put_u32(b, static_cast<uint32_t>(v));
}
inline uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] << 8 | p[1]);
}
inline uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
         static_cast<uint32_t>(p[2]) << 8 | static_cast<uint32_t>(p[3]);
}
inline uint64_t get_u64(const uint8_t* p) {
  return static_cast<uint64_t>(get_u32(p)) << 32 | get_u32(p + 4);
}

// Deterministic, platform-stable helpers on top of std::mt19937_64.
// Distribution classes from <random> are implementation-defined, so the
// few draws we need are spelled out here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  // Uniform double in [0, 1).
  double next_unit();
  // Uniform double in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
  // Standard normal via Box-Muller (bit-stable across platforms).
  double next_gaussian();

  // Derives an independent stream for a named concern.
  static uint64_t derive(uint64_t seed, const std::string& label);

 private:
  uint64_t splitmix();
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace streamkit
