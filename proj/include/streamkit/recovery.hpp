#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "streamkit/common.hpp"

namespace streamkit {

enum class ConnectivityPhase { Healthy, SuspectedDown, Down, Reconnecting, Recovered };

const char* connectivity_phase_name(ConnectivityPhase p);

struct MonitorConfig {
  Nanos rtp_silence_timeout = 100 * kMillisecond;
  Nanos ping_interval = 20 * kMillisecond;
};

struct MonitorActions {
  bool send_probe = false;
  bool start_handshake = false;
};

// Data-plane outage detector: RTP silence beyond the timeout raises
// suspicion, two unanswered probes confirm the outage, and the first probe
// that comes back starts the re-handshake. The detector arms on the first
// RTP packet of a session and disarms while a fresh session waits for its
// first packet, so an IDR-gate wait never looks like an outage.
class ConnectivityMonitor {
 public:
  explicit ConnectivityMonitor(const MonitorConfig& cfg) : cfg_(cfg) {}

  MonitorActions tick(Nanos now);
  void on_rtp(Nanos now);
  MonitorActions on_probe_ok(Nanos now);
  // Explicit address-change notification: Healthy -> Down directly.
  MonitorActions on_address_changed(Nanos now);
  void on_recovered(Nanos now);

  ConnectivityPhase phase() const { return phase_; }
  bool armed() const { return armed_; }
  Nanos last_rtp_rx() const { return last_rtp_rx_; }

 private:
  MonitorActions begin_probing(Nanos now, ConnectivityPhase to);

  MonitorConfig cfg_;
  ConnectivityPhase phase_ = ConnectivityPhase::Healthy;
  bool armed_ = false;
  Nanos last_rtp_rx_ = 0;
  std::optional<Nanos> last_probe_sent_;
  int probe_timeouts_ = 0;
};

struct HandshakeConfig {
  Nanos attempt_timeout = 250 * kMillisecond;
  Nanos retry_backoff = 50 * kMillisecond;
  Nanos give_up_after = 10 * kSecond;
};

struct HandshakeOutcome {
  std::string session_id;
  Nanos established_at = 0;  // local clock
  int attempts = 0;
};

// Drives one fresh SETUP + PLAY exchange with timeout/backoff retries.
// Used for the initial connect and for every post-handover reconnect; a
// stale session is never reused. RecoveryTimeout once give_up_after
// elapses without a PLAY confirmation.
class HandshakeClient {
 public:
  explicit HandshakeClient(const HandshakeConfig& cfg) : cfg_(cfg) {}

  struct Action {
    enum class Kind { None, SendSetup, SendPlay };
    Kind kind = Kind::None;
    int64_t cseq = 0;
    std::string session_id;  // for SendPlay
  };

  Action start(Nanos now, int64_t first_cseq);
  // Response routing is by cseq; unknown cseqs are ignored.
  Action on_response(int64_t cseq, int status, const std::optional<std::string>& session,
                     Nanos now);
  // Retries on timeout; throws RecoveryTimeout past the cap.
  Action tick(Nanos now);

  bool active() const { return state_ != State::Idle && state_ != State::Done; }
  bool done() const { return state_ == State::Done; }
  const HandshakeOutcome& outcome() const { return outcome_; }

 private:
  enum class State { Idle, AwaitSetup, AwaitPlay, Done };

  Action send_setup(Nanos now);

  HandshakeConfig cfg_;
  State state_ = State::Idle;
  Nanos started_ = 0;
  Nanos attempt_sent_ = 0;
  Nanos retry_at_ = -1;
  int64_t next_cseq_ = 0;
  int64_t pending_cseq_ = -1;
  std::string session_id_;
  HandshakeOutcome outcome_;
};

}  // namespace streamkit
