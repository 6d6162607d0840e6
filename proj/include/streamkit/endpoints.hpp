#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamkit/clock_sync.hpp"
#include "streamkit/common.hpp"
#include "streamkit/control.hpp"
#include "streamkit/media.hpp"
#include "streamkit/metrics.hpp"
#include "streamkit/recovery.hpp"
#include "streamkit/rtp.hpp"

namespace streamkit {

// How an entity talks to the world: its local clock, datagram output from
// one of its source ports, and relative timers. Implemented by the
// virtual-time experiment harness and by the real-socket runtime.
struct EntityEnv {
  std::function<Nanos()> now_local;
  std::function<void(uint16_t src_port, const NetAddress& to, Bytes bytes)> send;
  std::function<void(Nanos delay, std::function<void()> fn)> defer;
};

struct PlayoutPolicy {
  Nanos target_latency = 150 * kMillisecond;  // deadline mode
};

struct DecoderStubState {
  std::optional<uint64_t> last_decoded_frame_id;
  bool need_idr = true;
};

struct PlayoutDecision {
  enum class Kind { Display, DropLate, DropLoss, DropNeedIdr };
  Kind kind = Kind::Display;
  Nanos display_at = 0;  // only for Display: max(now, deadline)
};

// Deadline playout: a frame displays unless its assembly shows loss, fails
// checksum, breaks the reference chain, or finished decoding after
// capture + target_latency. `capture_ts_sender` is the sender-embedded
// capture timestamp (server timeline); `clock_offset` is this receiver's
// estimated offset to the server, so the deadline lands on the local clock.
PlayoutDecision playout_decide(const FrameAssembly& assembly, Nanos capture_ts_sender,
                               Nanos clock_offset, Nanos now, const PlayoutPolicy& policy,
                               DecoderStubState& dec);

struct SenderConfig {
  EncoderConfig encoder;
  // Non-empty: frames come from this raw Annex-B file instead of the
  // synthetic encoder (the stream ends when the file runs out).
  std::string source_file;
  uint32_t ssrc = 0x11111111;
  uint32_t preroll_ssrc = 0x22222222;
  size_t max_payload = 1200;
  Nanos encode_delay = 0;  // synthetic encoder stage cost
  Nanos ring_capacity = 15 * kSecond;
  NetAddress server_ingest;
  NetAddress server_control;
  uint16_t rtp_src_port = 5006;
  uint16_t ctrl_src_port = 5007;
  Nanos sync_interval = 10 * kSecond;
  int sync_burst = 8;
  Nanos sync_spacing = 25 * kMillisecond;
};

struct PrerollInfo {
  size_t frame_count = 0;
  uint64_t first_frame_id = 0;
  uint64_t last_frame_id = 0;
  Nanos capture_span = 0;
  std::vector<std::pair<uint64_t, uint32_t>> frames;  // (frame_id, checksum)
};

// Capture -> encode(stub) -> payload -> send, with the 15 s pre-roll ring.
// One tick per frame; the datagrams leave after the synthetic encode delay.
class SenderPipeline {
 public:
  SenderPipeline(const SenderConfig& cfg, EntityEnv env, TraceStore* traces,
                 std::vector<SyncRound>* sync_log);

  // Kicks off clock sync (burst now, then periodic rounds).
  void start();
  // Generates and sends frames at fps cadence until `frame_count` frames.
  void start_stream(uint64_t frame_count);
  // One frame now; normally driven by start_stream's timer chain.
  void tick();
  // Packetizes the ring snapshot onto the pre-roll ssrc. EmptyBuffer if no
  // IDR is buffered.
  PrerollInfo send_preroll();

  void on_datagram(const Datagram& dgram);

  uint64_t frames_sent() const { return frames_sent_; }
  const FrameRingBuffer& ring() const { return ring_; }
  Nanos clock_offset() const { return estimator_.offset_or_zero(); }

 private:
  void send_sync_ping();
  Nanos to_server(Nanos local) const { return estimator_.to_server(local); }

  SenderConfig cfg_;
  EntityEnv env_;
  TraceStore* traces_;
  std::vector<SyncRound>* sync_log_;
  SyntheticEncoder encoder_;
  std::optional<AnnexBFileSource> file_source_;
  Packetizer live_packetizer_;
  FrameRingBuffer ring_;
  OffsetEstimator estimator_;
  std::map<int64_t, Nanos> pending_pings_;  // cseq -> t0
  int64_t next_cseq_ = 1;
  uint64_t frames_sent_ = 0;
  uint64_t frames_to_send_ = 0;
  bool streaming_ = false;
};

struct ReceiverConfig {
  std::string stream_name = "cam";
  uint32_t live_ssrc = 0x11111111;
  uint32_t preroll_ssrc = 0x22222222;
  int fps = 30;
  uint32_t rtp_ts_base = 0;
  PlayoutPolicy policy;
  Nanos decode_delay = 0;  // synthetic decoder stage cost
  MonitorConfig monitor;
  HandshakeConfig handshake;
  Nanos keepalive_interval = 500 * kMillisecond;
  Nanos tick_period = 5 * kMillisecond;
  int sync_burst = 8;
  Nanos sync_spacing = 25 * kMillisecond;
  Nanos sync_interval = 10 * kSecond;
  NetAddress server_control;
  uint16_t rtp_port = 5004;
  uint16_t ctrl_src_port = 5005;
};

struct ReceiverCounters {
  uint64_t displayed = 0;
  uint64_t drop_late = 0;
  uint64_t drop_loss = 0;
  uint64_t drop_need_idr = 0;
  uint64_t rtp_packets = 0;
  uint64_t foreign_ssrc = 0;
};

struct RecoveryEvent {
  Nanos detected = 0;             // server timeline
  Nanos session_established = 0;  // server timeline
  Nanos first_display = 0;        // server timeline
  bool first_display_is_idr = false;
  std::string session_id;
};

// Receive -> depay -> decode(stub) -> playout, plus the connectivity
// monitor and session recovery. Owns the control client for this receiver.
class ReceiverPipeline {
 public:
  ReceiverPipeline(const ReceiverConfig& cfg, EntityEnv env, TraceStore* traces,
                   std::vector<SyncRound>* sync_log);

  // Clock sync burst, first handshake, periodic tick chain.
  void start();
  void on_datagram(const Datagram& dgram);
  void on_address_changed();
  // Graceful wind-down: TEARDOWN the session and stop the monitor and
  // keepalives, so end-of-stream silence is not mistaken for an outage.
  // Arriving stragglers are still depacketized and played out.
  void shutdown();
  // Flush depacketizers at end of run (remaining complete frames).
  void finalize();

  const ReceiverCounters& counters() const { return counters_; }
  const std::vector<RecoveryEvent>& recovery_events() const { return recovery_events_; }
  const std::vector<std::pair<uint64_t, uint32_t>>& preroll_received() const {
    return preroll_received_;
  }
  ConnectivityPhase connectivity() const { return monitor_.phase(); }
  const std::string& session_id() const { return session_id_; }
  Nanos clock_offset() const { return estimator_.offset_or_zero(); }
  std::optional<uint64_t> last_displayed_frame() const {
    return live_dec_.last_decoded_frame_id;
  }

 private:
  enum class PingPurpose { Sync, Probe, Keepalive };

  void tick();
  void begin_handshake(bool recovering);
  void perform_handshake_action(const HandshakeClient::Action& action);
  void send_ping(PingPurpose purpose, std::optional<std::string> session);
  void on_control(const Datagram& dgram);
  void on_rtp(const Datagram& dgram);
  void process_live_assembly(const FrameAssembly& assembly);
  void process_preroll_assembly(const FrameAssembly& assembly);
  Nanos to_server(Nanos local) const { return estimator_.to_server(local); }
  uint64_t frame_id_of(uint32_t rtp_ts) const;

  ReceiverConfig cfg_;
  EntityEnv env_;
  TraceStore* traces_;
  std::vector<SyncRound>* sync_log_;
  Depacketizer live_depack_;
  Depacketizer preroll_depack_;
  DecoderStubState live_dec_;
  DecoderStubState preroll_dec_;
  OffsetEstimator estimator_;
  ConnectivityMonitor monitor_;
  HandshakeClient handshake_;
  bool handshake_recovering_ = false;
  std::string session_id_;
  Nanos last_keepalive_ = -kSecond;
  int64_t next_cseq_ = 1;
  struct PendingPing {
    PingPurpose purpose;
    Nanos t0;
  };
  std::map<int64_t, PendingPing> pending_pings_;
  uint32_t ts_step_;
  ReceiverCounters counters_;
  std::vector<RecoveryEvent> recovery_events_;
  std::optional<RecoveryEvent> pending_recovery_;
  bool awaiting_first_display_ = false;
  std::vector<std::pair<uint64_t, uint32_t>> preroll_received_;
  bool started_ = false;
  bool stopped_ = false;
};

}  // namespace streamkit
