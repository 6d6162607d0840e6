#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamkit/common.hpp"

namespace streamkit {

// NAL unit header byte:
//   +---------------+
//   |0|1|2|3|4|5|6|7|
//   +-+-+-+-+-+-+-+-+
//   |F|NRI|  Type   |
//   +---------------+
// The stub encoder emits type 5 (IDR slice) and type 1 (non-IDR slice) only.
constexpr uint8_t kNalTypeNonIdr = 1;
constexpr uint8_t kNalTypeIdr = 5;
constexpr uint8_t kNalHeaderIdr = 0x65;     // F=0 NRI=3 type=5
constexpr uint8_t kNalHeaderNonIdr = 0x41;  // F=0 NRI=2 type=1

struct NalUnit {
  uint8_t header = 0;
  Bytes payload;

  uint8_t type() const { return header & 0x1F; }
  uint8_t nri() const { return (header >> 5) & 0x03; }
  bool forbidden_bit() const { return (header & 0x80) != 0; }
  bool operator==(const NalUnit&) const = default;
};

enum class FrameKind { IDR, P };

// Every frame's first NAL payload starts with a fixed metadata block so the
// receiver can recover identity, the capture instant (already on the server
// timeline) and an end-to-end checksum without out-of-band state:
//   [frame_id u64][capture_ts i64][crc32 u32]   (big-endian, 20 bytes)
// The crc32 covers the concatenated NAL payloads with the 4 crc bytes zeroed.
constexpr size_t kFrameMetaSize = 20;

struct FrameMeta {
  uint64_t frame_id = 0;
  Nanos capture_ts = 0;
  uint32_t checksum = 0;
};

struct EncodedFrame {
  uint64_t frame_id = 0;
  FrameKind kind = FrameKind::IDR;
  Nanos capture_ts = 0;
  std::vector<NalUnit> nal_units;
  uint32_t payload_checksum = 0;

  size_t size_bytes() const;
  bool operator==(const EncodedFrame&) const = default;
};

// crc32 of the frame's concatenated NAL payloads under the zeroed-crc-field
// convention described above.
uint32_t frame_checksum(const std::vector<NalUnit>& nals);

// Reads the metadata block from the first NAL. MalformedBitstream if absent.
FrameMeta read_frame_meta(const std::vector<NalUnit>& nals);

struct EncoderConfig {
  int fps = 30;
  uint64_t gop_length = 30;
  size_t idr_size = 20000;
  size_t p_size = 4000;
  uint64_t seed = 0;

  // Throws ConfigError. Frame sizes must leave room for the NAL header,
  // the metadata block and at least one filler byte.
  void validate() const;
};

// Deterministic stand-in for a camera + hardware encoder: filler bytes are a
// pure function of (seed, frame_id), so two encoders with equal configs
// produce byte-identical streams.
class SyntheticEncoder {
 public:
  explicit SyntheticEncoder(const EncoderConfig& cfg);

  // Emits the next frame captured at `now` (server-referenced timestamp).
  EncodedFrame generate(Nanos now);

  uint64_t next_frame_id() const { return next_frame_id_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  uint64_t next_frame_id_ = 0;
};

// Annex-B byte stream framing. Canonical serialization uses 4-byte start
// codes; the parser accepts both 3- and 4-byte codes.
Bytes serialize_annex_b(const std::vector<NalUnit>& nals);
std::vector<NalUnit> parse_annex_b(std::span<const uint8_t> bitstream);

// Rolling pre-roll buffer holding the trailing `capacity` of captured frames.
// Snapshot copies under the lock so readers never observe a partial push.
class FrameRingBuffer {
 public:
  explicit FrameRingBuffer(Nanos capacity = 15 * kSecond);

  // OutOfOrderFrame if `frame.capture_ts` precedes the newest stored frame.
  void push(EncodedFrame frame);

  // Retained frames with leading P frames trimmed so playback can start at
  // an IDR. EmptyBuffer if no IDR is retained.
  std::vector<EncodedFrame> snapshot() const;

  size_t size() const;
  Nanos capacity() const { return capacity_; }

 private:
  Nanos capacity_;
  mutable std::mutex mu_;
  std::deque<EncodedFrame> frames_;
};

// Replaces the synthetic encoder with frames read from a raw Annex-B file.
// Only slice NALs (types 1 and 5) are accepted; each slice becomes one frame
// and gets the standard metadata block prepended to its payload.
class AnnexBFileSource {
 public:
  AnnexBFileSource(const std::string& path, int fps);

  bool exhausted() const { return next_index_ >= slices_.size(); }
  size_t frame_count() const { return slices_.size(); }
  std::optional<EncodedFrame> generate(Nanos now);

 private:
  std::vector<NalUnit> slices_;
  size_t next_index_ = 0;
  uint64_t next_frame_id_ = 0;
};

}  // namespace streamkit
