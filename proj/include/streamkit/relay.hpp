#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "streamkit/common.hpp"
#include "streamkit/control.hpp"
#include "streamkit/metrics.hpp"
#include "streamkit/rtp.hpp"

namespace streamkit {

struct RelayConfig {
  std::string stream_name = "cam";
  std::set<uint32_t> accepted_ssrcs;
  Nanos session_timeout = 2 * kSecond;
  uint64_t seed = 0;
  int fps = 30;              // maps rtp timestamps back to frame ids
  uint32_t rtp_ts_base = 0;
};

struct RelayStats {
  uint64_t ingested = 0;
  uint64_t forwarded = 0;
  uint64_t foreign_ssrc = 0;
  uint64_t control_errors = 0;
  // Wall-clock forwarding cost per ingested packet (not part of the CSV
  // artifacts; virtual-time outputs must stay seed-deterministic).
  uint64_t forward_wall_ns_max = 0;
  uint64_t forward_wall_ns_total = 0;
};

struct ForwardTarget {
  std::string session_id;
  NetAddress to;
};

// The streaming server: owns the session registry, answers control
// requests, and fans the ingest stream out to every Playing session,
// holding each new subscriber back until a packet that starts an IDR frame.
// Pure forwarder; payload bytes pass through untouched.
class RelayCore {
 public:
  RelayCore(const RelayConfig& cfg, TraceStore* traces = nullptr);

  // Answers any request (including malformed input via `raw` overload).
  ControlMessage handle_control(const ControlMessage& req, const NetAddress& peer,
                                Nanos now);
  // Parses raw bytes; grammar errors yield a 400 response.
  ControlMessage handle_control_bytes(const Bytes& raw, const NetAddress& peer, Nanos now);

  // Destinations to copy this datagram to. ForeignSsrc packets are dropped
  // and counted, not thrown.
  std::vector<ForwardTarget> ingest_and_fanout(const Bytes& rtp_bytes, Nanos now);

  // Transitions idle sessions to Dead; returns their ids.
  std::vector<std::string> expire_sessions(Nanos now);

  const std::map<std::string, SessionState>& sessions() const { return sessions_; }
  const RelayStats& stats() const { return stats_; }
  size_t total_sessions_created() const { return sessions_created_; }

 private:
  std::string fresh_session_id();
  SessionState* find_alive(const std::string& id);

  RelayConfig cfg_;
  TraceStore* traces_;
  Rng rng_;
  std::map<std::string, SessionState> sessions_;
  size_t sessions_created_ = 0;
  uint32_t ts_step_;

  // Per-frame stamp bookkeeping (server_in on first packet, server_out on
  // the marker packet's forward), pruned as frames age out.
  std::map<std::pair<uint32_t, uint64_t>, uint8_t> stamped_;
  RelayStats stats_;
};

}  // namespace streamkit
