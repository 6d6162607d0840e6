#include "streamkit/relay.hpp"

#include <chrono>

#include "streamkit/log.hpp"

namespace streamkit {

namespace {
constexpr uint8_t kStampedIn = 1;
constexpr uint8_t kStampedOut = 2;
}  // namespace

RelayCore::RelayCore(const RelayConfig& cfg, TraceStore* traces)
    : cfg_(cfg), traces_(traces), rng_(Rng::derive(cfg.seed, "relay-sessions")) {
  if (cfg_.fps <= 0) throw StreamError(Errc::config_error, "fps must be positive");
  if (cfg_.session_timeout <= 0)
    throw StreamError(Errc::config_error, "session_timeout must be positive");
  ts_step_ = (kRtpClockHz + cfg_.fps / 2) / cfg_.fps;
}

std::string RelayCore::fresh_session_id() {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%08x", static_cast<uint32_t>(rng_.next_u64()));
  return buf;
}

SessionState* RelayCore::find_alive(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end() || it->second.phase == SessionPhase::Dead) return nullptr;
  return &it->second;
}

ControlMessage RelayCore::handle_control_bytes(const Bytes& raw, const NetAddress& peer,
                                               Nanos now) {
  try {
    std::string text(raw.begin(), raw.end());
    ControlMessage req = parse_message(text);
    if (req.kind != ControlMessage::Kind::Request)
      throw StreamError(Errc::malformed_message, "expected a request");
    return handle_control(req, peer, now);
  } catch (const StreamError& e) {
    stats_.control_errors++;
    auto resp = ControlMessage::response(400, "Bad Request", 0);
    resp.body = e.what();
    return resp;
  }
}

ControlMessage RelayCore::handle_control(const ControlMessage& req, const NetAddress& peer,
                                         Nanos now) {
  // A session-bearing request from a different host than the one the
  // session was bound to kills the session; the server never rebinds.
  if (req.session_id) {
    if (SessionState* s = find_alive(*req.session_id)) {
      if (s->peer.host != peer.host) {
        s->phase = session_transition(s->phase, SessionEvent::PeerAddressChanged);
        SK_LOG_INFO("session %s: peer address changed, now dead", s->id.c_str());
        stats_.control_errors++;
        return ControlMessage::response(454, "Session Not Found", req.cseq);
      }
    }
  }

  switch (req.method) {
    case Method::OPTIONS: {
      auto resp = ControlMessage::response(200, "OK", req.cseq);
      resp.peer_public = "OPTIONS, SETUP, PLAY, TEARDOWN, PING";
      return resp;
    }
    case Method::SETUP: {
      if (!req.client_rtp_port) {
        stats_.control_errors++;
        return ControlMessage::response(400, "Bad Request", req.cseq);
      }
      SessionState s;
      s.id = fresh_session_id();
      s.phase = session_transition(SessionPhase::Init, SessionEvent::SetupOk);
      s.peer = peer;
      s.rtp_port = *req.client_rtp_port;
      s.last_activity_ts = now;
      s.timeout = cfg_.session_timeout;
      s.awaiting_idr = true;
      sessions_[s.id] = s;
      sessions_created_++;
      auto resp = ControlMessage::response(200, "OK", req.cseq);
      resp.session_id = s.id;
      resp.timeout = s.timeout;
      return resp;
    }
    case Method::PLAY: {
      if (!req.session_id) {
        stats_.control_errors++;
        return ControlMessage::response(400, "Bad Request", req.cseq);
      }
      SessionState* s = find_alive(*req.session_id);
      if (!s) {
        stats_.control_errors++;
        return ControlMessage::response(454, "Session Not Found", req.cseq);
      }
      try {
        s->phase = session_transition(s->phase, SessionEvent::PlayOk);
      } catch (const StreamError&) {
        stats_.control_errors++;
        return ControlMessage::response(455, "Method Not Valid In This State", req.cseq);
      }
      s->last_activity_ts = now;
      auto resp = ControlMessage::response(200, "OK", req.cseq);
      resp.session_id = s->id;
      return resp;
    }
    case Method::TEARDOWN: {
      if (!req.session_id) {
        stats_.control_errors++;
        return ControlMessage::response(400, "Bad Request", req.cseq);
      }
      SessionState* s = find_alive(*req.session_id);
      if (!s) {
        stats_.control_errors++;
        return ControlMessage::response(454, "Session Not Found", req.cseq);
      }
      s->phase = session_transition(s->phase, SessionEvent::Teardown);
      return ControlMessage::response(200, "OK", req.cseq);
    }
    case Method::PING: {
      auto resp = ControlMessage::response(200, "OK", req.cseq);
      // Clock sync: echo T0, stamp server receive/send. In this process the
      // receive and send instants coincide.
      if (req.t0) {
        resp.t0 = req.t0;
        resp.t1 = now;
        resp.t2 = now;
      }
      if (req.session_id) {
        SessionState* s = find_alive(*req.session_id);
        if (!s) {
          stats_.control_errors++;
          return ControlMessage::response(454, "Session Not Found", req.cseq);
        }
        s->last_activity_ts = now;  // keepalive
        resp.session_id = s->id;
      }
      return resp;
    }
  }
  stats_.control_errors++;
  return ControlMessage::response(400, "Bad Request", req.cseq);
}

std::vector<ForwardTarget> RelayCore::ingest_and_fanout(const Bytes& rtp_bytes, Nanos now) {
  const auto wall_start = std::chrono::steady_clock::now();
  std::vector<ForwardTarget> out;

  if (rtp_bytes.size() < kRtpHeaderSize) {
    stats_.foreign_ssrc++;
    return out;
  }
  const uint32_t ts = get_u32(rtp_bytes.data() + 4);
  const uint32_t ssrc = get_u32(rtp_bytes.data() + 8);
  const bool marker = (rtp_bytes[1] & 0x80) != 0;
  if (!cfg_.accepted_ssrcs.count(ssrc)) {
    stats_.foreign_ssrc++;
    return out;
  }
  stats_.ingested++;

  const std::span<const uint8_t> payload(rtp_bytes.data() + kRtpHeaderSize,
                                         rtp_bytes.size() - kRtpHeaderSize);
  const bool idr_packet = payload_in_idr_frame(payload);
  const uint64_t frame_id = static_cast<uint32_t>(ts - cfg_.rtp_ts_base) / ts_step_;

  if (traces_) {
    auto key = std::make_pair(ssrc, frame_id);
    uint8_t& flags = stamped_[key];
    if (!(flags & kStampedIn)) {
      traces_->record_stage(ssrc, frame_id, Stage::server_in, now);
      flags |= kStampedIn;
    }
  }

  bool any_forward = false;
  for (auto& [id, s] : sessions_) {
    if (s.phase != SessionPhase::Playing) continue;
    if (s.awaiting_idr) {
      if (!idr_packet) continue;
      s.awaiting_idr = false;
    }
    out.push_back(ForwardTarget{id, NetAddress{s.peer.host, s.rtp_port}});
    any_forward = true;
  }
  stats_.forwarded += out.size();

  if (traces_ && any_forward && marker) {
    auto key = std::make_pair(ssrc, frame_id);
    uint8_t& flags = stamped_[key];
    if (!(flags & kStampedOut)) {
      traces_->record_stage(ssrc, frame_id, Stage::server_out, now);
      flags |= kStampedOut;
    }
  }
  // Prune stamp bookkeeping once frames are well past. The cap must exceed
  // the deepest in-flight frame window (a full pre-roll replay).
  while (stamped_.size() > 4096) stamped_.erase(stamped_.begin());

  const uint64_t wall_ns = static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now() - wall_start)
          .count());
  stats_.forward_wall_ns_total += wall_ns;
  if (wall_ns > stats_.forward_wall_ns_max) stats_.forward_wall_ns_max = wall_ns;
  return out;
}

std::vector<std::string> RelayCore::expire_sessions(Nanos now) {
  std::vector<std::string> expired;
  for (auto& [id, s] : sessions_) {
    if (s.phase == SessionPhase::Dead) continue;
    if (now - s.last_activity_ts > s.timeout) {
      s.phase = session_transition(s.phase, SessionEvent::Timeout);
      expired.push_back(id);
      SK_LOG_DEBUG("session %s expired", id.c_str());
    }
  }
  return expired;
}

}  // namespace streamkit
