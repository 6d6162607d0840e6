#include "streamkit/control.hpp"

#include <charconv>
#include <sstream>
#include <vector>

namespace streamkit {

const char* method_name(Method m) {
  switch (m) {
    case Method::OPTIONS: return "OPTIONS";
    case Method::SETUP: return "SETUP";
    case Method::PLAY: return "PLAY";
    case Method::TEARDOWN: return "TEARDOWN";
    case Method::PING: return "PING";
  }
  return "?";
}

const char* phase_name(SessionPhase p) {
  switch (p) {
    case SessionPhase::Init: return "Init";
    case SessionPhase::Ready: return "Ready";
    case SessionPhase::Playing: return "Playing";
    case SessionPhase::Dead: return "Dead";
  }
  return "?";
}

ControlMessage ControlMessage::request(Method m, const std::string& stream, int64_t cseq) {
  ControlMessage msg;
  msg.kind = Kind::Request;
  msg.method = m;
  msg.stream_name = stream;
  msg.cseq = cseq;
  return msg;
}

ControlMessage ControlMessage::response(int status, const std::string& reason, int64_t cseq) {
  ControlMessage msg;
  msg.kind = Kind::Response;
  msg.status = status;
  msg.reason = reason;
  msg.cseq = cseq;
  return msg;
}

std::string render_message(const ControlMessage& msg) {
  std::ostringstream out;
  if (msg.kind == ControlMessage::Kind::Request) {
    out << method_name(msg.method) << ' ' << msg.stream_name << " CTRL/1.0\r\n";
  } else {
    out << "CTRL/1.0 " << msg.status << ' ' << msg.reason << "\r\n";
  }
  out << "CSeq: " << msg.cseq << "\r\n";
  if (msg.session_id) out << "Session: " << *msg.session_id << "\r\n";
  if (msg.client_rtp_port) out << "Transport: client_port=" << *msg.client_rtp_port << "\r\n";
  if (msg.timeout) out << "Timeout-Ms: " << (*msg.timeout / kMillisecond) << "\r\n";
  if (msg.t0) out << "T0: " << *msg.t0 << "\r\n";
  if (msg.t1) out << "T1: " << *msg.t1 << "\r\n";
  if (msg.t2) out << "T2: " << *msg.t2 << "\r\n";
  if (msg.peer_public) out << "Public: " << *msg.peer_public << "\r\n";
  out << "\r\n";
  out << msg.body;
  return out.str();
}

namespace {

std::optional<Method> method_from(const std::string& s) {
  for (Method m : {Method::OPTIONS, Method::SETUP, Method::PLAY, Method::TEARDOWN,
                   Method::PING}) {
    if (s == method_name(m)) return m;
  }
  return std::nullopt;
}

int64_t parse_int(const std::string& s, const char* what) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw StreamError(Errc::malformed_message, std::string("bad ") + what + ": " + s);
  return v;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

ControlMessage parse_message(const std::string& text) {
  // Split head (up to the blank line) from body.
  size_t head_end = text.find("\r\n\r\n");
  if (head_end == std::string::npos)
    throw StreamError(Errc::malformed_message, "missing blank line");
  std::string body = text.substr(head_end + 4);

  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < head_end) {
    size_t eol = text.find("\r\n", pos);
    if (eol == std::string::npos || eol > head_end) eol = head_end;
    lines.push_back(text.substr(pos, eol - pos));
    pos = eol + 2;
  }
  if (lines.empty()) throw StreamError(Errc::malformed_message, "missing first line");

  ControlMessage msg;
  msg.body = std::move(body);
  {
    std::istringstream first(lines[0]);
    std::string a, b, c;
    first >> a >> b >> c;
    if (a == "CTRL/1.0") {
      msg.kind = ControlMessage::Kind::Response;
      msg.status = static_cast<int>(parse_int(b, "status"));
      size_t sp = lines[0].find(' ', lines[0].find(' ') + 1);
      msg.reason = lines[0].substr(sp + 1);
    } else {
      if (c != "CTRL/1.0")
        throw StreamError(Errc::malformed_message, "bad first line: " + lines[0]);
      auto m = method_from(a);
      if (!m) throw StreamError(Errc::malformed_message, "unknown method: " + a);
      msg.kind = ControlMessage::Kind::Request;
      msg.method = *m;
      msg.stream_name = b;
    }
  }

  bool have_cseq = false;
  for (size_t i = 1; i < lines.size(); ++i) {
    size_t colon = lines[i].find(':');
    if (colon == std::string::npos)
      throw StreamError(Errc::malformed_message, "bad header line: " + lines[i]);
    const std::string key = trim(lines[i].substr(0, colon));
    const std::string value = trim(lines[i].substr(colon + 1));
    if (key == "CSeq") {
      msg.cseq = parse_int(value, "CSeq");
      have_cseq = true;
    } else if (key == "Session") {
      msg.session_id = value;
    } else if (key == "Transport") {
      const std::string prefix = "client_port=";
      if (value.rfind(prefix, 0) != 0)
        throw StreamError(Errc::malformed_message, "bad Transport: " + value);
      msg.client_rtp_port = static_cast<uint16_t>(parse_int(value.substr(prefix.size()), "client_port"));
    } else if (key == "Timeout-Ms") {
      msg.timeout = parse_int(value, "Timeout-Ms") * kMillisecond;
    } else if (key == "T0") {
      msg.t0 = parse_int(value, "T0");
    } else if (key == "T1") {
      msg.t1 = parse_int(value, "T1");
    } else if (key == "T2") {
      msg.t2 = parse_int(value, "T2");
    } else if (key == "Public") {
      msg.peer_public = value;
    } else {
      throw StreamError(Errc::malformed_message, "unknown header: " + key);
    }
  }
  if (!have_cseq) throw StreamError(Errc::malformed_message, "missing CSeq");
  return msg;
}

SessionPhase session_transition(SessionPhase phase, SessionEvent event) {
  switch (event) {
    case SessionEvent::SetupOk:
      if (phase == SessionPhase::Init) return SessionPhase::Ready;
      break;
    case SessionEvent::PlayOk:
      if (phase == SessionPhase::Ready) return SessionPhase::Playing;
      break;
    case SessionEvent::Teardown:
    case SessionEvent::Timeout:
    case SessionEvent::PeerAddressChanged:
      return SessionPhase::Dead;
  }
  throw StreamError(Errc::illegal_transition,
                    std::string(phase_name(phase)) + " cannot take this event");
}

bool keepalive_due(const SessionState& state, Nanos now, Nanos interval) {
  return now - state.last_activity_ts >= interval;
}

}  // namespace streamkit
