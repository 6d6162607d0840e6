#include "streamkit/rtp.hpp"

#include <algorithm>

namespace streamkit {

Bytes encode_packet(const RtpPacket& pkt) {
  Bytes out;
  out.reserve(kRtpHeaderSize + pkt.payload.size());
  out.push_back(0x80);  // V=2, P=0, X=0, CC=0
  out.push_back(static_cast<uint8_t>((pkt.marker ? 0x80 : 0x00) | (pkt.payload_type & 0x7F)));
  put_u16(out, pkt.seq);
  put_u32(out, pkt.rtp_timestamp);
  put_u32(out, pkt.ssrc);
  out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
  return out;
}

RtpPacket decode_packet(std::span<const uint8_t> bytes) {
  if (bytes.size() < kRtpHeaderSize)
    throw StreamError(Errc::truncated_packet,
                      "need 12 header bytes, got " + std::to_string(bytes.size()));
  if ((bytes[0] >> 6) != 2)
    throw StreamError(Errc::bad_version, "version " + std::to_string(bytes[0] >> 6));
  RtpPacket pkt;
  pkt.marker = (bytes[1] & 0x80) != 0;
  pkt.payload_type = bytes[1] & 0x7F;
  pkt.seq = get_u16(bytes.data() + 2);
  pkt.rtp_timestamp = get_u32(bytes.data() + 4);
  pkt.ssrc = get_u32(bytes.data() + 8);
  pkt.payload.assign(bytes.begin() + kRtpHeaderSize, bytes.end());
  return pkt;
}

bool payload_starts_idr(std::span<const uint8_t> p) {
  if (p.empty()) return false;
  const uint8_t type = p[0] & 0x1F;
  if (type == kNalTypeIdr) return true;
  if (type == kFuAType && p.size() >= 2) {
    const bool start = (p[1] & 0x80) != 0;
    return start && (p[1] & 0x1F) == kNalTypeIdr;
  }
  return false;
}

bool payload_in_idr_frame(std::span<const uint8_t> p) {
  if (p.empty()) return false;
  const uint8_t type = p[0] & 0x1F;
  if (type == kNalTypeIdr) return true;
  return type == kFuAType && p.size() >= 2 && (p[1] & 0x1F) == kNalTypeIdr;
}

Packetizer::Packetizer(const PacketizerConfig& cfg)
    : cfg_(cfg), next_seq_(cfg.start_seq) {
  if (cfg_.max_payload < 3)
    throw StreamError(Errc::config_error, "max_payload must be >= 3");
  if (cfg_.fps <= 0) throw StreamError(Errc::config_error, "fps must be positive");
  ts_step_ = (kRtpClockHz + cfg_.fps / 2) / cfg_.fps;
}

uint32_t Packetizer::rtp_timestamp_for(uint64_t frame_id) const {
  return cfg_.rtp_ts_base + static_cast<uint32_t>(frame_id) * ts_step_;
}

std::vector<RtpPacket> Packetizer::packetize(const EncodedFrame& frame) {
  const uint32_t ts = rtp_timestamp_for(frame.frame_id);
  std::vector<RtpPacket> out;

  auto base_packet = [&]() {
    RtpPacket pkt;
    pkt.seq = next_seq_++;
    pkt.rtp_timestamp = ts;
    pkt.ssrc = cfg_.ssrc;
    return pkt;
  };

  for (const auto& nal : frame.nal_units) {
    const size_t nal_size = 1 + nal.payload.size();
    if (nal_size <= cfg_.max_payload) {
      RtpPacket pkt = base_packet();
      pkt.payload.reserve(nal_size);
      pkt.payload.push_back(nal.header);
      pkt.payload.insert(pkt.payload.end(), nal.payload.begin(), nal.payload.end());
      out.push_back(std::move(pkt));
      continue;
    }
    // FU-A: indicator keeps F/NRI with type 28; header carries S/E and the
    // original type. Each fragment holds up to max_payload - 2 payload bytes.
    const uint8_t indicator = static_cast<uint8_t>((nal.header & 0xE0) | kFuAType);
    const size_t chunk = cfg_.max_payload - 2;
    size_t off = 0;
    while (off < nal.payload.size()) {
      const size_t n = std::min(chunk, nal.payload.size() - off);
      RtpPacket pkt = base_packet();
      uint8_t fu_header = nal.header & 0x1F;
      if (off == 0) fu_header |= 0x80;                          // S
      if (off + n == nal.payload.size()) fu_header |= 0x40;     // E
      pkt.payload.reserve(2 + n);
      pkt.payload.push_back(indicator);
      pkt.payload.push_back(fu_header);
      pkt.payload.insert(pkt.payload.end(), nal.payload.begin() + off,
                         nal.payload.begin() + off + n);
      out.push_back(std::move(pkt));
      off += n;
    }
  }
  out.back().marker = true;
  return out;
}

std::vector<NalUnit> nal_units_from_payloads(const std::vector<Bytes>& payloads) {
  std::vector<NalUnit> nals;
  std::optional<NalUnit> fua;  // in-progress fragmented NAL
  for (const Bytes& p : payloads) {
    if (p.empty()) throw StreamError(Errc::malformed_bitstream, "empty RTP payload");
    const uint8_t type = p[0] & 0x1F;
    if (type == kFuAType) {
      if (p.size() < 2) throw StreamError(Errc::malformed_bitstream, "short FU-A");
      const bool s = (p[1] & 0x80) != 0;
      const bool e = (p[1] & 0x40) != 0;
      if (s && e) throw StreamError(Errc::malformed_bitstream, "FU-A with both S and E");
      if (s) {
        if (fua) throw StreamError(Errc::malformed_bitstream, "FU-A restart mid NAL");
        fua.emplace();
        fua->header = static_cast<uint8_t>((p[0] & 0xE0) | (p[1] & 0x1F));
      } else if (!fua) {
        throw StreamError(Errc::malformed_bitstream, "FU-A continuation without start");
      }
      fua->payload.insert(fua->payload.end(), p.begin() + 2, p.end());
      if (e) {
        nals.push_back(std::move(*fua));
        fua.reset();
      }
    } else {
      if (fua) throw StreamError(Errc::malformed_bitstream, "FU-A not terminated");
      NalUnit nal;
      nal.header = p[0];
      nal.payload.assign(p.begin() + 1, p.end());
      nals.push_back(std::move(nal));
    }
  }
  if (fua) throw StreamError(Errc::malformed_bitstream, "FU-A not terminated");
  if (nals.empty()) throw StreamError(Errc::malformed_bitstream, "no NAL units");
  return nals;
}

FrameAssembly Depacketizer::emit(uint32_t ts, PendingFrame& f, bool complete) {
  FrameAssembly assembly;
  assembly.ssrc = ssrc_;
  assembly.rtp_timestamp = ts;
  assembly.first_arrival_ts = f.first_arrival;
  assembly.last_arrival_ts = f.last_arrival;
  if (complete) {
    std::vector<Bytes> ordered;
    ordered.reserve(f.payloads.size());
    uint16_t s = f.min_seq;
    for (size_t i = 0; i < f.payloads.size(); ++i, ++s) ordered.push_back(std::move(f.payloads[s]));
    try {
      assembly.nal_units = nal_units_from_payloads(ordered);
      assembly.complete = true;
    } catch (const StreamError&) {
      // Structurally broken payloads count as loss.
      assembly.nal_units.clear();
      assembly.loss_detected = true;
    }
  } else {
    assembly.loss_detected = true;
  }
  return assembly;
}

bool Depacketizer::internal_hole(const PendingFrame& f) const {
  const uint16_t span = static_cast<uint16_t>(f.max_seq - f.min_seq);
  return f.payloads.size() != static_cast<size_t>(span) + 1;
}

bool Depacketizer::front_complete(const PendingFrame& f, bool at_flush) const {
  if (!f.marker_seq || *f.marker_seq != f.max_seq) return false;
  if (internal_hole(f)) return false;
  if (boundary_) {
    // The frame head must line up with the previous frame's end.
    return f.min_seq == *boundary_;
  }
  // Without a boundary the head is unknowable mid-stream: a lone marker
  // packet would otherwise look complete. Wait until the stream has moved
  // past this frame (or the caller flushes).
  return at_flush || pending_.size() > 1;
}

std::vector<FrameAssembly> Depacketizer::push(const RtpPacket& pkt, Nanos now) {
  std::vector<FrameAssembly> emitted;
  if (pkt.ssrc != ssrc_) return emitted;
  stats_.packets++;

  if (boundary_ && seq_diff(pkt.seq, *boundary_) < 0) {
    stats_.stale++;
    return emitted;
  }

  // Locate or create the frame bucket, keeping serial timestamp order.
  auto it = std::find_if(pending_.begin(), pending_.end(),
                         [&](const auto& e) { return e.first == pkt.rtp_timestamp; });
  if (it == pending_.end()) {
    auto pos = std::find_if(pending_.begin(), pending_.end(), [&](const auto& e) {
      return ts_diff(e.first, pkt.rtp_timestamp) > 0;
    });
    it = pending_.insert(pos, {pkt.rtp_timestamp, PendingFrame{}});
    it->second.min_seq = it->second.max_seq = pkt.seq;
    it->second.first_arrival = now;
  }
  PendingFrame& f = it->second;
  if (f.payloads.count(pkt.seq)) {
    stats_.duplicates++;
    return emitted;
  }
  f.payloads[pkt.seq] = pkt.payload;
  if (seq_diff(pkt.seq, f.min_seq) < 0) f.min_seq = pkt.seq;
  if (seq_diff(pkt.seq, f.max_seq) > 0) f.max_seq = pkt.seq;
  f.last_arrival = now;
  if (pkt.marker) f.marker_seq = pkt.seq;

  // A packet that starts an IDR frame is that frame's head; it anchors the
  // boundary for streams joined at an IDR gate (or resumed after recovery).
  if (!boundary_ && payload_starts_idr(pkt.payload)) boundary_ = pkt.seq;

  // Resolve from the front for as long as frames can be decided. A hole
  // between two seen seqs of the front frame plus any newer-timestamp
  // packet proves loss immediately; holes at the frame's head or tail may
  // just be reordering still in flight, so those wait until two newer
  // frames exist (the bounded horizon).
  for (;;) {
    if (pending_.empty()) break;
    auto& [ts, front] = pending_.front();
    if (front_complete(front, /*at_flush=*/false)) {
      boundary_ = static_cast<uint16_t>(*front.marker_seq + 1);
      emitted.push_back(emit(ts, front, true));
      pending_.erase(pending_.begin());
      continue;
    }
    const size_t newer = pending_.size() - 1;
    if (newer == 0) break;
    if (internal_hole(front) || newer >= 2) {
      // A frame that is internally whole but starts past the boundary may
      // be innocent: the missing seqs can belong to frames that vanished
      // entirely. Try it as complete and let the payload structure decide
      // (a frame missing its own head cannot parse).
      const bool self_whole =
          front.marker_seq && *front.marker_seq == front.max_seq && !internal_hole(front);
      if (self_whole) {
        boundary_ = static_cast<uint16_t>(front.max_seq + 1);
      } else {
        boundary_ = pending_[1].second.min_seq;
      }
      emitted.push_back(emit(ts, front, self_whole));
      pending_.erase(pending_.begin());
      continue;
    }
    break;
  }
  return emitted;
}

std::vector<FrameAssembly> Depacketizer::flush() {
  std::vector<FrameAssembly> emitted;
  while (!pending_.empty()) {
    auto& [ts, front] = pending_.front();
    if (!front_complete(front, /*at_flush=*/true)) break;
    boundary_ = static_cast<uint16_t>(*front.marker_seq + 1);
    emitted.push_back(emit(ts, front, true));
    pending_.erase(pending_.begin());
  }
  return emitted;
}

}  // namespace streamkit
