#pragma once

#include <cstddef>
#include <deque>

#include "streamkit/common.hpp"

namespace streamkit {

// One NTP-style exchange. t0/t3 are client clock, t1/t2 server clock.
// offset is how far the server clock runs ahead of the client clock, so
// server_time = client_time + offset under symmetric path delays.
struct SyncSample {
  Nanos t0 = 0, t1 = 0, t2 = 0, t3 = 0;

  Nanos rtt() const { return (t3 - t0) - (t2 - t1); }
  Nanos offset() const { return ((t1 - t0) + (t2 - t3)) / 2; }
};

// Keeps the most recent `window` samples and reports the offset of the
// minimum-RTT one among them, the usual guard against queueing spikes.
class OffsetEstimator {
 public:
  explicit OffsetEstimator(size_t window = 8) : window_(window) {}

  void add(const SyncSample& s);
  bool has_estimate() const { return !samples_.empty(); }
  // NoSamples before the first add().
  Nanos estimate() const;
  // Offset to apply, 0 until the first sample lands.
  Nanos offset_or_zero() const { return samples_.empty() ? 0 : estimate(); }
  Nanos to_server(Nanos local) const { return local + offset_or_zero(); }

  size_t sample_count() const { return samples_.size(); }

 private:
  size_t window_;
  std::deque<SyncSample> samples_;
};

Nanos estimate_offset(const std::deque<SyncSample>& samples, size_t k);

}  // namespace streamkit
