#include "streamkit/common.hpp"

#include <cmath>

namespace streamkit {

const char* errc_name(Errc e) {
  switch (e) {
    case Errc::malformed_bitstream: return "MalformedBitstream";
    case Errc::out_of_order_frame: return "OutOfOrderFrame";
    case Errc::empty_buffer: return "EmptyBuffer";
    case Errc::truncated_packet: return "TruncatedPacket";
    case Errc::bad_version: return "BadVersion";
    case Errc::malformed_message: return "MalformedMessage";
    case Errc::illegal_transition: return "IllegalTransition";
    case Errc::session_not_found: return "SessionNotFound";
    case Errc::foreign_ssrc: return "ForeignSsrc";
    case Errc::unknown_address: return "UnknownAddress";
    case Errc::duplicate_stage: return "DuplicateStage";
    case Errc::incomplete_trace: return "IncompleteTrace";
    case Errc::empty_series: return "EmptySeries";
    case Errc::no_samples: return "NoSamples";
    case Errc::recovery_timeout: return "RecoveryTimeout";
    case Errc::config_error: return "ConfigError";
    case Errc::schema_mismatch: return "SchemaMismatch";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

uint64_t Rng::splitmix() {
  uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t Rng::next_u64() { return splitmix(); }

double Rng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_unit() - 1.0;
    v = 2.0 * next_unit() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  have_spare_ = true;
  return u * m;
}

uint64_t Rng::derive(uint64_t seed, const std::string& label) {
  // FNV-1a over the label, folded into the seed.
  uint64_t h = 14695981039346656037ULL;
  for (char c : label) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ULL;
  }
  Rng mix(seed ^ h);
  return mix.next_u64();
}

}  // namespace streamkit
