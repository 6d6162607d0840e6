#include "streamkit/media.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace streamkit {

size_t EncodedFrame::size_bytes() const {
  size_t n = 0;
  for (const auto& nal : nal_units) n += 1 + nal.payload.size();
  return n;
}

uint32_t frame_checksum(const std::vector<NalUnit>& nals) {
  uLong crc = crc32(0L, Z_NULL, 0);
  static const uint8_t kZeros[4] = {0, 0, 0, 0};
  bool first = true;
  for (const auto& nal : nals) {
    const Bytes& p = nal.payload;
    if (first && p.size() >= kFrameMetaSize) {
      // crc field zeroed while hashing.
      crc = crc32(crc, p.data(), kFrameMetaSize - 4);
      crc = crc32(crc, kZeros, 4);
      crc = crc32(crc, p.data() + kFrameMetaSize, p.size() - kFrameMetaSize);
    } else {
      crc = crc32(crc, p.data(), static_cast<uInt>(p.size()));
    }
    first = false;
  }
  return static_cast<uint32_t>(crc);
}

FrameMeta read_frame_meta(const std::vector<NalUnit>& nals) {
  if (nals.empty() || nals.front().payload.size() < kFrameMetaSize)
    throw StreamError(Errc::malformed_bitstream, "frame metadata block missing");
  const uint8_t* p = nals.front().payload.data();
  FrameMeta meta;
  meta.frame_id = get_u64(p);
  meta.capture_ts = static_cast<Nanos>(get_u64(p + 8));
  meta.checksum = get_u32(p + 16);
  return meta;
}

namespace {

void write_frame_meta(Bytes& payload, uint64_t frame_id, Nanos capture_ts) {
  Bytes meta;
  meta.reserve(kFrameMetaSize);
  put_u64(meta, frame_id);
  put_u64(meta, static_cast<uint64_t>(capture_ts));
  put_u32(meta, 0);  // crc placeholder
  std::memcpy(payload.data(), meta.data(), kFrameMetaSize);
}

void seal_checksum(EncodedFrame& frame) {
  frame.payload_checksum = frame_checksum(frame.nal_units);
  Bytes& p = frame.nal_units.front().payload;
  p[16] = static_cast<uint8_t>(frame.payload_checksum >> 24);
  p[17] = static_cast<uint8_t>(frame.payload_checksum >> 16);
  p[18] = static_cast<uint8_t>(frame.payload_checksum >> 8);
  p[19] = static_cast<uint8_t>(frame.payload_checksum);
}

}  // namespace

void EncoderConfig::validate() const {
  if (fps <= 0) throw StreamError(Errc::config_error, "fps must be positive");
  if (gop_length < 1) throw StreamError(Errc::config_error, "gop_length must be >= 1");
  const size_t min_size = 1 + kFrameMetaSize + 1;  // header + meta + filler
  if (idr_size < min_size || p_size < min_size)
    throw StreamError(Errc::config_error,
                      "frame sizes must be >= " + std::to_string(min_size) + " bytes");
}

SyntheticEncoder::SyntheticEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
}

EncodedFrame SyntheticEncoder::generate(Nanos now) {
  const uint64_t id = next_frame_id_++;
  const bool idr = (id % cfg_.gop_length) == 0;

  EncodedFrame frame;
  frame.frame_id = id;
  frame.kind = idr ? FrameKind::IDR : FrameKind::P;
  frame.capture_ts = now;

  NalUnit nal;
  nal.header = idr ? kNalHeaderIdr : kNalHeaderNonIdr;
  const size_t total = idr ? cfg_.idr_size : cfg_.p_size;
  nal.payload.resize(total - 1);

  // Filler depends only on (seed, frame_id).
  Rng rng(Rng::derive(cfg_.seed, "frame-" + std::to_string(id)));
  for (size_t i = kFrameMetaSize; i < nal.payload.size(); i += 8) {
    uint64_t w = rng.next_u64();
    for (size_t j = 0; j < 8 && i + j < nal.payload.size(); ++j) {
      nal.payload[i + j] = static_cast<uint8_t>(w >> (8 * j));
    }
  }
  write_frame_meta(nal.payload, id, now);

  frame.nal_units.push_back(std::move(nal));
  seal_checksum(frame);
  return frame;
}

Bytes serialize_annex_b(const std::vector<NalUnit>& nals) {
  Bytes out;
  for (const auto& nal : nals) {
    out.insert(out.end(), {0x00, 0x00, 0x00, 0x01});
    // Emulation-prevention escaping: a 0x03 is inserted after any two zero
    // bytes followed by a byte <= 0x03, so payload bytes can never form a
    // start code on the wire.
    int zero_run = 0;
    auto emit = [&](uint8_t x) {
      if (zero_run >= 2 && x <= 0x03) {
        out.push_back(0x03);
        zero_run = 0;
      }
      out.push_back(x);
      zero_run = (x == 0) ? zero_run + 1 : 0;
    };
    emit(nal.header);
    for (uint8_t x : nal.payload) emit(x);
  }
  return out;
}

namespace {

// Returns the start-code length at `pos` (3 or 4), or 0.
size_t start_code_at(std::span<const uint8_t> b, size_t pos) {
  if (pos + 3 <= b.size() && b[pos] == 0 && b[pos + 1] == 0 && b[pos + 2] == 1) return 3;
  if (pos + 4 <= b.size() && b[pos] == 0 && b[pos + 1] == 0 && b[pos + 2] == 0 &&
      b[pos + 3] == 1)
    return 4;
  return 0;
}

// Inverse of the serializer's escaping: 00 00 03 followed by a byte <= 03
// drops the 03.
Bytes unescape(std::span<const uint8_t> span) {
  Bytes out;
  out.reserve(span.size());
  int zero_run = 0;
  for (size_t i = 0; i < span.size(); ++i) {
    const uint8_t x = span[i];
    if (zero_run >= 2 && x == 0x03 && i + 1 < span.size() && span[i + 1] <= 0x03) {
      zero_run = 0;
      continue;
    }
    out.push_back(x);
    zero_run = (x == 0) ? zero_run + 1 : 0;
  }
  return out;
}

}  // namespace

std::vector<NalUnit> parse_annex_b(std::span<const uint8_t> bitstream) {
  size_t lead = start_code_at(bitstream, 0);
  if (lead == 0)
    throw StreamError(Errc::malformed_bitstream, "no leading start code");

  std::vector<NalUnit> nals;
  size_t pos = lead;
  while (pos <= bitstream.size()) {
    // Scan for the next start code (or end of stream).
    size_t next = pos;
    size_t sc = 0;
    while (next < bitstream.size()) {
      sc = start_code_at(bitstream, next);
      if (sc != 0) break;
      ++next;
    }
    if (next == pos)
      throw StreamError(Errc::malformed_bitstream, "zero-length NAL unit");
    Bytes raw = unescape(std::span(bitstream.data() + pos, next - pos));
    if (raw.empty())
      throw StreamError(Errc::malformed_bitstream, "zero-length NAL unit");
    NalUnit nal;
    nal.header = raw[0];
    nal.payload.assign(raw.begin() + 1, raw.end());
    nals.push_back(std::move(nal));
    if (next >= bitstream.size()) break;
    pos = next + sc;
  }
  return nals;
}

FrameRingBuffer::FrameRingBuffer(Nanos capacity) : capacity_(capacity) {}

void FrameRingBuffer::push(EncodedFrame frame) {
  std::lock_guard lk(mu_);
  if (!frames_.empty() && frame.capture_ts < frames_.back().capture_ts)
    throw StreamError(Errc::out_of_order_frame,
                      "capture_ts " + std::to_string(frame.capture_ts) +
                          " older than newest " +
                          std::to_string(frames_.back().capture_ts));
  const Nanos horizon = frame.capture_ts - capacity_;
  frames_.push_back(std::move(frame));
  while (frames_.front().capture_ts < horizon) frames_.pop_front();
}

std::vector<EncodedFrame> FrameRingBuffer::snapshot() const {
  std::lock_guard lk(mu_);
  auto it = frames_.begin();
  while (it != frames_.end() && it->kind != FrameKind::IDR) ++it;
  if (it == frames_.end())
    throw StreamError(Errc::empty_buffer, "no IDR frame retained");
  return {it, frames_.end()};
}

size_t FrameRingBuffer::size() const {
  std::lock_guard lk(mu_);
  return frames_.size();
}

AnnexBFileSource::AnnexBFileSource(const std::string& path, int fps) {
  if (fps <= 0) throw StreamError(Errc::config_error, "fps must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StreamError(Errc::io_error, "cannot open " + path);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  slices_ = parse_annex_b(data);
  for (const auto& nal : slices_) {
    if (nal.type() != kNalTypeIdr && nal.type() != kNalTypeNonIdr)
      throw StreamError(Errc::malformed_bitstream,
                        "unsupported NAL type " + std::to_string(nal.type()));
    if (nal.forbidden_bit())
      throw StreamError(Errc::malformed_bitstream, "forbidden_zero_bit set");
  }
}

std::optional<EncodedFrame> AnnexBFileSource::generate(Nanos now) {
  if (exhausted()) return std::nullopt;
  const NalUnit& slice = slices_[next_index_++];
  const uint64_t id = next_frame_id_++;

  EncodedFrame frame;
  frame.frame_id = id;
  frame.kind = slice.type() == kNalTypeIdr ? FrameKind::IDR : FrameKind::P;
  frame.capture_ts = now;

  NalUnit nal;
  nal.header = slice.header;
  nal.payload.resize(kFrameMetaSize);
  nal.payload.insert(nal.payload.end(), slice.payload.begin(), slice.payload.end());
  write_frame_meta(nal.payload, id, now);
  frame.nal_units.push_back(std::move(nal));
  seal_checksum(frame);
  return frame;
}

}  // namespace streamkit
