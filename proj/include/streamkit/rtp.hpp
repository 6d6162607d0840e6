#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "streamkit/common.hpp"
#include "streamkit/media.hpp"

namespace streamkit {

// Fixed 12-byte RTP header, big-endian:
//  0                   1                   2                   3
//  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
// |V=2|P|X|  CC   |M|     PT      |       sequence number         |
// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
// |                           timestamp                           |
// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
// |           synchronization source (SSRC) identifier            |
// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
// P, X and CC are always zero here.
constexpr size_t kRtpHeaderSize = 12;
constexpr uint32_t kRtpClockHz = 90000;
constexpr uint8_t kFuAType = 28;

struct RtpPacket {
  bool marker = false;
  uint8_t payload_type = 96;
  uint16_t seq = 0;
  uint32_t rtp_timestamp = 0;
  uint32_t ssrc = 0;
  Bytes payload;

  bool operator==(const RtpPacket&) const = default;
};

Bytes encode_packet(const RtpPacket& pkt);
// TruncatedPacket if fewer than 12 bytes; BadVersion if version != 2.
RtpPacket decode_packet(std::span<const uint8_t> bytes);

// Serial-number comparisons (RFC 1982 style) for the wrapping counters.
inline int16_t seq_diff(uint16_t a, uint16_t b) {
  return static_cast<int16_t>(static_cast<uint16_t>(a - b));
}
inline int32_t ts_diff(uint32_t a, uint32_t b) {
  return static_cast<int32_t>(a - b);
}

// True when the first payload byte(s) of an RTP packet begin an IDR frame:
// a single-NAL packet of type 5, or an FU-A start fragment whose original
// type is 5. Cheap header peek, no full parse.
bool payload_starts_idr(std::span<const uint8_t> rtp_payload);

// True when the packet belongs to an IDR frame at all (any FU-A fragment
// keeps the original type in its FU header). This is what the relay's IDR
// gate tests: under reordering, a continuation fragment of the IDR can
// overtake the start fragment, and holding the gate for the S bit would
// punch a hole into the subscriber's first frame.
bool payload_in_idr_frame(std::span<const uint8_t> rtp_payload);

struct PacketizerConfig {
  uint32_t ssrc = 0;
  uint16_t start_seq = 0;
  uint32_t rtp_ts_base = 0;
  size_t max_payload = 1200;
  int fps = 30;
};

// H.264-style payloading: NALs that fit go out as single-NAL packets, larger
// ones as FU-A fragment runs. All packets of a frame share one timestamp and
// only the final packet carries the marker.
class Packetizer {
 public:
  explicit Packetizer(const PacketizerConfig& cfg);

  std::vector<RtpPacket> packetize(const EncodedFrame& frame);

  uint16_t next_seq() const { return next_seq_; }
  uint32_t rtp_timestamp_for(uint64_t frame_id) const;
  uint32_t ts_step() const { return ts_step_; }
  const PacketizerConfig& config() const { return cfg_; }

 private:
  PacketizerConfig cfg_;
  uint16_t next_seq_;
  uint32_t ts_step_;
};

struct FrameAssembly {
  uint32_t ssrc = 0;
  uint32_t rtp_timestamp = 0;
  std::vector<NalUnit> nal_units;  // empty when loss_detected
  bool complete = false;
  bool loss_detected = false;
  Nanos first_arrival_ts = 0;
  Nanos last_arrival_ts = 0;
};

struct DepacketizerStats {
  uint64_t packets = 0;
  uint64_t duplicates = 0;
  uint64_t stale = 0;  // below the emission boundary
};

// Reassembles frames from one RTP stream. Packets may arrive out of order
// or duplicated. A frame is emitted complete when its marker packet and
// every lower seq back to the frame boundary are present; it is emitted as
// a loss as soon as a newer-timestamp packet proves a gap, or once two
// newer frames are in flight (bounded horizon for reordering).
class Depacketizer {
 public:
  explicit Depacketizer(uint32_t ssrc) : ssrc_(ssrc) {}

  std::vector<FrameAssembly> push(const RtpPacket& pkt, Nanos now);
  // Flushes any still-buffered complete front frames (end of stream).
  std::vector<FrameAssembly> flush();

  const DepacketizerStats& stats() const { return stats_; }

 private:
  struct PendingFrame {
    std::map<uint16_t, Bytes> payloads;  // ordered by raw seq; small spans
    std::optional<uint16_t> marker_seq;
    uint16_t min_seq = 0;
    uint16_t max_seq = 0;
    Nanos first_arrival = 0;
    Nanos last_arrival = 0;
  };

  FrameAssembly emit(uint32_t ts, PendingFrame& f, bool complete);
  bool front_complete(const PendingFrame& f, bool at_flush) const;
  bool internal_hole(const PendingFrame& f) const;

  uint32_t ssrc_;
  // Frame buffers keyed by rtp timestamp; kept sorted by serial order.
  std::vector<std::pair<uint32_t, PendingFrame>> pending_;
  std::optional<uint16_t> boundary_;  // next expected frame-start seq
  DepacketizerStats stats_;
};

// Rebuilds the NAL sequence from depacketized payloads in seq order.
// MalformedBitstream on inconsistent FU-A framing.
std::vector<NalUnit> nal_units_from_payloads(const std::vector<Bytes>& payloads);

}  // namespace streamkit
