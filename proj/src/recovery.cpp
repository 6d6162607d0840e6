#include "streamkit/recovery.hpp"

namespace streamkit {

const char* connectivity_phase_name(ConnectivityPhase p) {
  switch (p) {
    case ConnectivityPhase::Healthy: return "Healthy";
    case ConnectivityPhase::SuspectedDown: return "SuspectedDown";
    case ConnectivityPhase::Down: return "Down";
    case ConnectivityPhase::Reconnecting: return "Reconnecting";
    case ConnectivityPhase::Recovered: return "Recovered";
  }
  return "?";
}

MonitorActions ConnectivityMonitor::begin_probing(Nanos now, ConnectivityPhase to) {
  phase_ = to;
  last_probe_sent_ = now;
  probe_timeouts_ = 0;
  return MonitorActions{.send_probe = true};
}

MonitorActions ConnectivityMonitor::tick(Nanos now) {
  switch (phase_) {
    case ConnectivityPhase::Healthy:
      if (armed_ && now - last_rtp_rx_ > cfg_.rtp_silence_timeout) {
        return begin_probing(now, ConnectivityPhase::SuspectedDown);
      }
      return {};
    case ConnectivityPhase::SuspectedDown:
    case ConnectivityPhase::Down: {
      if (last_probe_sent_ && now - *last_probe_sent_ >= cfg_.ping_interval) {
        // The previous probe went unanswered.
        probe_timeouts_++;
        if (phase_ == ConnectivityPhase::SuspectedDown && probe_timeouts_ >= 2) {
          phase_ = ConnectivityPhase::Down;
        }
        last_probe_sent_ = now;
        return MonitorActions{.send_probe = true};
      }
      return {};
    }
    case ConnectivityPhase::Reconnecting:
    case ConnectivityPhase::Recovered:
      return {};
  }
  return {};
}

void ConnectivityMonitor::on_rtp(Nanos now) {
  last_rtp_rx_ = now;
  armed_ = true;
  if (phase_ == ConnectivityPhase::Recovered) phase_ = ConnectivityPhase::Healthy;
}

MonitorActions ConnectivityMonitor::on_probe_ok(Nanos now) {
  (void)now;
  if (phase_ == ConnectivityPhase::SuspectedDown || phase_ == ConnectivityPhase::Down) {
    phase_ = ConnectivityPhase::Reconnecting;
    last_probe_sent_.reset();
    return MonitorActions{.start_handshake = true};
  }
  return {};
}

MonitorActions ConnectivityMonitor::on_address_changed(Nanos now) {
  if (phase_ == ConnectivityPhase::Healthy || phase_ == ConnectivityPhase::SuspectedDown) {
    return begin_probing(now, ConnectivityPhase::Down);
  }
  return {};
}

void ConnectivityMonitor::on_recovered(Nanos now) {
  (void)now;
  phase_ = ConnectivityPhase::Recovered;
  armed_ = false;  // wait for the new session's first packet
  last_probe_sent_.reset();
  probe_timeouts_ = 0;
}

HandshakeClient::Action HandshakeClient::send_setup(Nanos now) {
  state_ = State::AwaitSetup;
  attempt_sent_ = now;
  retry_at_ = -1;
  outcome_.attempts++;
  pending_cseq_ = next_cseq_++;
  return Action{Action::Kind::SendSetup, pending_cseq_, {}};
}

HandshakeClient::Action HandshakeClient::start(Nanos now, int64_t first_cseq) {
  started_ = now;
  next_cseq_ = first_cseq;
  outcome_ = {};
  session_id_.clear();
  return send_setup(now);
}

HandshakeClient::Action HandshakeClient::on_response(int64_t cseq, int status,
                                                     const std::optional<std::string>& session,
                                                     Nanos now) {
  if (cseq != pending_cseq_) return {};
  switch (state_) {
    case State::AwaitSetup:
      if (status == 200 && session) {
        session_id_ = *session;
        state_ = State::AwaitPlay;
        attempt_sent_ = now;
        pending_cseq_ = next_cseq_++;
        return Action{Action::Kind::SendPlay, pending_cseq_, session_id_};
      }
      // Failed SETUP: back off, then start over.
      retry_at_ = now + cfg_.retry_backoff;
      return {};
    case State::AwaitPlay:
      if (status == 200) {
        state_ = State::Done;
        outcome_.session_id = session_id_;
        outcome_.established_at = now;
        return {};
      }
      retry_at_ = now + cfg_.retry_backoff;
      state_ = State::AwaitSetup;  // full fresh handshake on retry
      return {};
    default:
      return {};
  }
}

HandshakeClient::Action HandshakeClient::tick(Nanos now) {
  if (!active()) return {};
  if (now - started_ > cfg_.give_up_after)
    throw StreamError(Errc::recovery_timeout,
                      "no session after " + std::to_string(cfg_.give_up_after / kMillisecond) +
                          " ms (" + std::to_string(outcome_.attempts) + " attempts)");
  if (retry_at_ >= 0 && now >= retry_at_) return send_setup(now);
  if (retry_at_ < 0 && now - attempt_sent_ > cfg_.attempt_timeout) {
    retry_at_ = now + cfg_.retry_backoff;
  }
  return {};
}

}  // namespace streamkit
