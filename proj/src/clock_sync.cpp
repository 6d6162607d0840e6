#include "streamkit/clock_sync.hpp"

namespace streamkit {

void OffsetEstimator::add(const SyncSample& s) {
  samples_.push_back(s);
  while (samples_.size() > window_) samples_.pop_front();
}

Nanos OffsetEstimator::estimate() const { return estimate_offset(samples_, window_); }

Nanos estimate_offset(const std::deque<SyncSample>& samples, size_t k) {
  if (samples.empty() || k == 0)
    throw StreamError(Errc::no_samples, "no sync samples collected");
  const size_t first = samples.size() > k ? samples.size() - k : 0;
  const SyncSample* best = &samples[first];
  for (size_t i = first + 1; i < samples.size(); ++i) {
    if (samples[i].rtt() < best->rtt()) best = &samples[i];
  }
  return best->offset();
}

}  // namespace streamkit
