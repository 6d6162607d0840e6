#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "streamkit/common.hpp"

namespace streamkit {

// Text control protocol, one message per UDP datagram, CRLF line endings:
//   <METHOD> <stream-name> CTRL/1.0        requests
//   CTRL/1.0 <code> <reason>               responses
// followed by "Key: Value" headers and a blank line. Recognized headers:
// CSeq, Session, Transport (client_port=N), Timeout-Ms, T0/T1/T2 (clock
// sync timestamps, decimal nanoseconds). Anything after the blank line is
// the optional body.
enum class Method { OPTIONS, SETUP, PLAY, TEARDOWN, PING };

const char* method_name(Method m);

struct ControlMessage {
  enum class Kind { Request, Response };
  Kind kind = Kind::Request;

  Method method = Method::OPTIONS;  // requests
  std::string stream_name;          // requests
  int status = 0;                   // responses
  std::string reason;               // responses

  int64_t cseq = 0;
  std::optional<std::string> session_id;
  std::optional<uint16_t> client_rtp_port;  // Transport: client_port=N
  std::optional<Nanos> timeout;             // Timeout-Ms (stored as ns)
  std::optional<Nanos> t0, t1, t2;          // sync timestamps
  std::optional<std::string> peer_public;   // Public header on OPTIONS replies
  std::string body;

  bool operator==(const ControlMessage&) const = default;

  static ControlMessage request(Method m, const std::string& stream, int64_t cseq);
  static ControlMessage response(int status, const std::string& reason, int64_t cseq);
};

std::string render_message(const ControlMessage& msg);
// MalformedMessage on grammar violations (bad first line, unknown method,
// missing CSeq).
ControlMessage parse_message(const std::string& text);

enum class SessionPhase { Init, Ready, Playing, Dead };
enum class SessionEvent { SetupOk, PlayOk, Teardown, Timeout, PeerAddressChanged };

const char* phase_name(SessionPhase p);

struct SessionState {
  std::string id;
  SessionPhase phase = SessionPhase::Init;
  NetAddress peer;          // control source address
  uint16_t rtp_port = 0;    // where media is forwarded
  Nanos last_activity_ts = 0;
  Nanos timeout = 2 * kSecond;
  bool awaiting_idr = true;
};

// Legal transitions only; IllegalTransition otherwise. Dead is absorbing
// for Teardown/Timeout/PeerAddressChanged but not for Setup/Play.
SessionPhase session_transition(SessionPhase phase, SessionEvent event);

// True once `interval` has elapsed since the last activity. The interval is
// validated against the session timeout at configuration time.
bool keepalive_due(const SessionState& state, Nanos now, Nanos interval);

}  // namespace streamkit
