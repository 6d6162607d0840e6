#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "streamkit/control.hpp"

using namespace streamkit;

TEST_CASE("parses the documented SETUP request") {
  const std::string wire =
      "SETUP cam CTRL/1.0\r\nCSeq: 1\r\nTransport: client_port=5004\r\n\r\n";
  ControlMessage msg = parse_message(wire);
  CHECK(msg.kind == ControlMessage::Kind::Request);
  CHECK(msg.method == Method::SETUP);
  CHECK(msg.stream_name == "cam");
  CHECK(msg.cseq == 1);
  REQUIRE(msg.client_rtp_port.has_value());
  CHECK(*msg.client_rtp_port == 5004);
}

TEST_CASE("parses the documented 200 response") {
  const std::string wire =
      "CTRL/1.0 200 OK\r\nCSeq: 1\r\nSession: ab12\r\nTimeout-Ms: 2000\r\n\r\n";
  ControlMessage msg = parse_message(wire);
  CHECK(msg.kind == ControlMessage::Kind::Response);
  CHECK(msg.status == 200);
  CHECK(msg.reason == "OK");
  CHECK(msg.cseq == 1);
  CHECK(msg.session_id == "ab12");
  REQUIRE(msg.timeout.has_value());
  CHECK(*msg.timeout == 2 * kSecond);
}

TEST_CASE("malformed messages are rejected") {
  // Missing CSeq.
  CHECK_THROWS_AS(parse_message("SETUP cam CTRL/1.0\r\n\r\n"), StreamError);
  // Unknown method.
  CHECK_THROWS_AS(parse_message("FETCH cam CTRL/1.0\r\nCSeq: 1\r\n\r\n"), StreamError);
  // Missing first line / blank line.
  CHECK_THROWS_AS(parse_message(""), StreamError);
  CHECK_THROWS_AS(parse_message("SETUP cam CTRL/1.0\r\nCSeq: 1\r\n"), StreamError);
  // Bad version tag.
  CHECK_THROWS_AS(parse_message("SETUP cam RTSP/1.0\r\nCSeq: 1\r\n\r\n"), StreamError);
}

TEST_CASE("grammar round trip across randomized messages") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> pick(0, 4);
  std::uniform_int_distribution<int> num(0, 100000);
  const Method methods[] = {Method::OPTIONS, Method::SETUP, Method::PLAY,
                            Method::TEARDOWN, Method::PING};
  for (int i = 0; i < 500; ++i) {
    ControlMessage msg;
    if (coin(rng)) {
      msg = ControlMessage::request(methods[pick(rng)], "cam", num(rng));
      if (coin(rng)) msg.client_rtp_port = static_cast<uint16_t>(num(rng) % 65536);
    } else {
      msg = ControlMessage::response(coin(rng) ? 200 : 454,
                                     coin(rng) ? "OK" : "Session Not Found", num(rng));
      if (coin(rng)) msg.timeout = static_cast<Nanos>(num(rng)) * kMillisecond;
    }
    if (coin(rng)) msg.session_id = "s" + std::to_string(num(rng));
    if (coin(rng)) {
      msg.t0 = num(rng);
      msg.t1 = num(rng);
      msg.t2 = num(rng);
    }
    if (coin(rng)) msg.body = "line one\nline two";
    CHECK(parse_message(render_message(msg)) == msg);
  }
}

TEST_CASE("session transitions follow the lifecycle") {
  CHECK(session_transition(SessionPhase::Init, SessionEvent::SetupOk) == SessionPhase::Ready);
  CHECK(session_transition(SessionPhase::Ready, SessionEvent::PlayOk) ==
        SessionPhase::Playing);
  CHECK(session_transition(SessionPhase::Playing, SessionEvent::Teardown) ==
        SessionPhase::Dead);
  CHECK(session_transition(SessionPhase::Ready, SessionEvent::Timeout) == SessionPhase::Dead);
  CHECK(session_transition(SessionPhase::Playing, SessionEvent::PeerAddressChanged) ==
        SessionPhase::Dead);
}

TEST_CASE("illegal transitions throw") {
  CHECK_THROWS_AS(session_transition(SessionPhase::Init, SessionEvent::PlayOk), StreamError);
  CHECK_THROWS_AS(session_transition(SessionPhase::Ready, SessionEvent::SetupOk), StreamError);
  CHECK_THROWS_AS(session_transition(SessionPhase::Playing, SessionEvent::PlayOk),
                  StreamError);
  CHECK_THROWS_AS(session_transition(SessionPhase::Dead, SessionEvent::SetupOk), StreamError);
  CHECK_THROWS_AS(session_transition(SessionPhase::Dead, SessionEvent::PlayOk), StreamError);
}

TEST_CASE("no event sequence reaches Playing without passing Ready") {
  // Exhaustive walk over short event sequences.
  const SessionEvent events[] = {SessionEvent::SetupOk, SessionEvent::PlayOk,
                                 SessionEvent::Teardown, SessionEvent::Timeout,
                                 SessionEvent::PeerAddressChanged};
  std::vector<std::vector<int>> stack{{}};
  int playing_paths = 0;
  while (!stack.empty()) {
    auto seq = stack.back();
    stack.pop_back();
    if (seq.size() >= 4) continue;
    for (int e = 0; e < 5; ++e) {
      auto next = seq;
      next.push_back(e);
      SessionPhase phase = SessionPhase::Init;
      bool legal = true;
      bool passed_ready = false;
      for (int idx : next) {
        try {
          phase = session_transition(phase, events[idx]);
          if (phase == SessionPhase::Ready) passed_ready = true;
        } catch (const StreamError&) {
          legal = false;
          break;
        }
      }
      if (legal && phase == SessionPhase::Playing) {
        playing_paths++;
        CHECK(passed_ready);
      }
      // Dead is absorbing: anything after Dead must be refused or Dead.
      if (legal && phase == SessionPhase::Dead) {
        for (int e2 = 0; e2 < 5; ++e2) {
          try {
            SessionPhase after = session_transition(phase, events[e2]);
            CHECK(after == SessionPhase::Dead);
          } catch (const StreamError&) {
            // refusal keeps it absorbing too
          }
        }
      }
      if (legal) stack.push_back(next);
    }
  }
  CHECK(playing_paths > 0);
}

TEST_CASE("keepalive_due compares against the interval") {
  SessionState s;
  s.last_activity_ts = 0;
  CHECK(keepalive_due(s, 600 * kMillisecond, 500 * kMillisecond));
  CHECK(!keepalive_due(s, 400 * kMillisecond, 500 * kMillisecond));
  CHECK(keepalive_due(s, 500 * kMillisecond, 500 * kMillisecond));
}
