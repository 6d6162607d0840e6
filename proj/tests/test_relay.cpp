#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "streamkit/media.hpp"
#include "streamkit/relay.hpp"
#include "streamkit/rtp.hpp"

using namespace streamkit;

namespace {

RelayConfig relay_config() {
  RelayConfig cfg;
  cfg.accepted_ssrcs = {0x11};
  cfg.session_timeout = 2 * kSecond;
  cfg.seed = 1;
  cfg.fps = 30;
  return cfg;
}

ControlMessage setup_request(int64_t cseq, uint16_t rtp_port) {
  auto req = ControlMessage::request(Method::SETUP, "cam", cseq);
  req.client_rtp_port = rtp_port;
  return req;
}

// Incrementing the cseq per call keeps request identities distinct.
struct Client {
  RelayCore& relay;
  NetAddress addr;
  int64_t cseq = 0;

  std::string setup_and_play(Nanos now, uint16_t rtp_port = 5004) {
    auto setup = relay.handle_control(setup_request(++cseq, rtp_port), addr, now);
    REQUIRE(setup.status == 200);
    REQUIRE(setup.session_id.has_value());
    auto play = ControlMessage::request(Method::PLAY, "cam", ++cseq);
    play.session_id = setup.session_id;
    auto resp = relay.handle_control(play, addr, now);
    REQUIRE(resp.status == 200);
    return *setup.session_id;
  }
};

std::vector<Bytes> packetize_wire(SyntheticEncoder& enc, Packetizer& pk, Nanos ts) {
  std::vector<Bytes> out;
  for (const auto& p : pk.packetize(enc.generate(ts))) out.push_back(encode_packet(p));
  return out;
}

EncoderConfig enc_config() {
  EncoderConfig cfg;
  cfg.fps = 30;
  cfg.gop_length = 5;
  cfg.idr_size = 2000;
  cfg.p_size = 500;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("setup then play reaches Playing with the idr gate armed") {
  RelayCore relay(relay_config());
  Client c{relay, {"10.0.0.3", 40000}};
  const std::string sid = c.setup_and_play(0);
  const SessionState& s = relay.sessions().at(sid);
  CHECK(s.phase == SessionPhase::Playing);
  CHECK(s.awaiting_idr);
  CHECK(s.rtp_port == 5004);
  CHECK(s.peer.host == "10.0.0.3");
  CHECK(s.timeout == 2 * kSecond);
}

TEST_CASE("setup responses carry a session id and timeout") {
  RelayCore relay(relay_config());
  auto resp = relay.handle_control(setup_request(9, 6000), {"10.0.0.3", 40000}, 0);
  CHECK(resp.cseq == 9);
  CHECK(resp.session_id.has_value());
  CHECK(resp.timeout == 2 * kSecond);
}

TEST_CASE("play with an unknown session id yields 454") {
  RelayCore relay(relay_config());
  auto play = ControlMessage::request(Method::PLAY, "cam", 1);
  play.session_id = "nope";
  CHECK(relay.handle_control(play, {"10.0.0.3", 1}, 0).status == 454);
}

TEST_CASE("malformed bytes yield a 400 response") {
  RelayCore relay(relay_config());
  Bytes garbage = {'h', 'i'};
  CHECK(relay.handle_control_bytes(garbage, {"10.0.0.3", 1}, 0).status == 400);
  const std::string no_cseq = "SETUP cam CTRL/1.0\r\n\r\n";
  CHECK(relay.handle_control_bytes(Bytes(no_cseq.begin(), no_cseq.end()), {"10.0.0.3", 1}, 0)
            .status == 400);
}

TEST_CASE("subscribers are gated until a packet that starts an IDR frame") {
  TraceStore traces;
  RelayCore relay(relay_config(), &traces);
  Client c{relay, {"10.0.0.3", 40000}};
  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x11, 0, 0, 1200, 30});

  // Frames 0 (IDR), 1, 2 flow before the subscriber joins.
  for (int i = 0; i < 3; ++i) {
    for (const auto& bytes : packetize_wire(enc, pk, i)) relay.ingest_and_fanout(bytes, i);
  }
  c.setup_and_play(100);

  // Mid-GOP P frames are withheld.
  size_t forwarded = 0;
  for (int i = 3; i < 5; ++i) {
    for (const auto& bytes : packetize_wire(enc, pk, i)) {
      forwarded += relay.ingest_and_fanout(bytes, i).size();
    }
  }
  CHECK(forwarded == 0);

  // Frame 5 is the next IDR: forwarding starts at its first packet.
  auto frame5 = packetize_wire(enc, pk, 5);
  std::vector<size_t> per_packet;
  for (const auto& bytes : frame5) {
    per_packet.push_back(relay.ingest_and_fanout(bytes, 5).size());
  }
  for (size_t n : per_packet) CHECK(n == 1);
  CHECK(payload_starts_idr(
      std::span(frame5[0].data() + kRtpHeaderSize, frame5[0].size() - kRtpHeaderSize)));
}

TEST_CASE("fan-out duplicates every packet to each playing session, in order") {
  RelayCore relay(relay_config());
  Client c1{relay, {"10.0.0.3", 40000}};
  Client c2{relay, {"10.0.0.4", 40001}};
  const std::string s1 = c1.setup_and_play(0, 5004);
  const std::string s2 = c2.setup_and_play(0, 6004);

  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x11, 0, 0, 1200, 30});
  std::map<std::string, std::vector<NetAddress>> per_session;
  size_t ingested = 0;
  for (int i = 0; i < 10; ++i) {
    for (const auto& bytes : packetize_wire(enc, pk, i)) {
      ingested++;
      for (const auto& target : relay.ingest_and_fanout(bytes, i)) {
        per_session[target.session_id].push_back(target.to);
      }
    }
  }
  REQUIRE(per_session.count(s1) == 1);
  REQUIRE(per_session.count(s2) == 1);
  CHECK(per_session[s1].size() == ingested);
  CHECK(per_session[s2].size() == ingested);
  CHECK(per_session[s1].front() == NetAddress{"10.0.0.3", 5004});
  CHECK(per_session[s2].front() == NetAddress{"10.0.0.4", 6004});
}

TEST_CASE("zero playing sessions: ingest accepted and counted, nothing forwarded") {
  RelayCore relay(relay_config());
  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x11, 0, 0, 1200, 30});
  size_t forwarded = 0;
  for (const auto& bytes : packetize_wire(enc, pk, 0)) {
    forwarded += relay.ingest_and_fanout(bytes, 0).size();
  }
  CHECK(forwarded == 0);
  CHECK(relay.stats().ingested > 0);
}

TEST_CASE("foreign ssrc is dropped and counted") {
  RelayCore relay(relay_config());
  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x99, 0, 0, 1200, 30});  // not accepted
  for (const auto& bytes : packetize_wire(enc, pk, 0)) relay.ingest_and_fanout(bytes, 0);
  CHECK(relay.stats().ingested == 0);
  CHECK(relay.stats().foreign_ssrc > 0);
}

TEST_CASE("a session-bearing request from a new host kills the session") {
  RelayCore relay(relay_config());
  Client c{relay, {"10.0.0.3", 40000}};
  const std::string sid = c.setup_and_play(0);

  auto ping = ControlMessage::request(Method::PING, "cam", 50);
  ping.session_id = sid;
  auto resp = relay.handle_control(ping, {"10.0.2.1", 40000}, 100);
  CHECK(resp.status == 454);
  CHECK(relay.sessions().at(sid).phase == SessionPhase::Dead);

  // End-to-end address binding: zero packets forwarded afterwards.
  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x11, 0, 0, 1200, 30});
  size_t forwarded = 0;
  for (const auto& bytes : packetize_wire(enc, pk, 0)) {
    forwarded += relay.ingest_and_fanout(bytes, 200).size();
  }
  CHECK(forwarded == 0);
}

TEST_CASE("second setup from a new address is an independent session") {
  RelayCore relay(relay_config());
  Client old_c{relay, {"10.0.0.3", 40000}};
  const std::string old_sid = old_c.setup_and_play(0);

  Client new_c{relay, {"10.0.2.1", 40000}};
  const std::string new_sid = new_c.setup_and_play(500 * kMillisecond);
  CHECK(new_sid != old_sid);
  CHECK(relay.sessions().at(new_sid).phase == SessionPhase::Playing);
  CHECK(relay.sessions().at(new_sid).awaiting_idr);
  CHECK(relay.total_sessions_created() == 2);
  // The old session is still registered (stale) until it expires.
  auto expired = relay.expire_sessions(3 * kSecond);
  CHECK(std::find(expired.begin(), expired.end(), old_sid) != expired.end());
}

TEST_CASE("only control refreshes last_activity; data does not") {
  TraceStore traces;
  RelayCore relay(relay_config(), &traces);
  Client c{relay, {"10.0.0.3", 40000}};
  const std::string sid = c.setup_and_play(0);

  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x11, 0, 0, 1200, 30});
  // Data flows past the timeout horizon without any keepalive.
  for (int i = 0; i < 5; ++i) {
    const Nanos now = (i + 1) * 500 * kMillisecond;
    for (const auto& bytes : packetize_wire(enc, pk, i)) relay.ingest_and_fanout(bytes, now);
  }
  auto expired = relay.expire_sessions(2500 * kMillisecond);
  REQUIRE(expired.size() == 1);
  CHECK(expired[0] == sid);

  // A keepalive PING would have kept it alive.
  Client c2{relay, {"10.0.0.5", 40000}};
  const std::string sid2 = c2.setup_and_play(3 * kSecond);
  auto ping = ControlMessage::request(Method::PING, "cam", 99);
  ping.session_id = sid2;
  CHECK(relay.handle_control(ping, c2.addr, 4500 * kMillisecond).status == 200);
  CHECK(relay.expire_sessions(5 * kSecond).empty());
}

TEST_CASE("expiry on an empty registry is empty") {
  RelayCore relay(relay_config());
  CHECK(relay.expire_sessions(kSecond).empty());
}

TEST_CASE("options lists the supported methods") {
  RelayCore relay(relay_config());
  auto resp = relay.handle_control(ControlMessage::request(Method::OPTIONS, "cam", 5),
                                   {"10.0.0.3", 1}, 0);
  CHECK(resp.status == 200);
  CHECK(resp.cseq == 5);
  REQUIRE(resp.peer_public.has_value());
  CHECK(resp.peer_public->find("SETUP") != std::string::npos);
  CHECK(resp.peer_public->find("PING") != std::string::npos);
}

TEST_CASE("teardown kills a session; ping is stateless without a session") {
  RelayCore relay(relay_config());
  Client c{relay, {"10.0.0.3", 40000}};
  const std::string sid = c.setup_and_play(0);
  auto teardown = ControlMessage::request(Method::TEARDOWN, "cam", 77);
  teardown.session_id = sid;
  CHECK(relay.handle_control(teardown, c.addr, 100).status == 200);
  CHECK(relay.sessions().at(sid).phase == SessionPhase::Dead);

  auto ping = ControlMessage::request(Method::PING, "cam", 78);
  ping.t0 = 12345;
  auto pong = relay.handle_control(ping, {"10.9.9.9", 1}, 500);
  CHECK(pong.status == 200);
  CHECK(pong.t0 == 12345);
  CHECK(pong.t1 == 500);
  CHECK(pong.t2 == 500);
}

TEST_CASE("expiring one session never perturbs another") {
  TraceStore traces;
  RelayCore relay(relay_config(), &traces);
  Client keeper{relay, {"10.0.0.3", 40000}};
  Client idle{relay, {"10.0.0.4", 40000}};
  const std::string keep_sid = keeper.setup_and_play(0);
  const std::string idle_sid = idle.setup_and_play(0, 6004);

  SyntheticEncoder enc(enc_config());
  Packetizer pk(PacketizerConfig{0x11, 0, 0, 1200, 30});
  std::vector<uint16_t> before_seqs, after_seqs;
  Nanos now = 0;
  for (int i = 0; i < 4; ++i) {
    now = (i + 1) * 400 * kMillisecond;
    auto keep_ping = ControlMessage::request(Method::PING, "cam", 100 + i);
    keep_ping.session_id = keep_sid;
    relay.handle_control(keep_ping, keeper.addr, now);
    for (const auto& bytes : packetize_wire(enc, pk, i)) {
      for (const auto& t : relay.ingest_and_fanout(bytes, now)) {
        if (t.session_id == keep_sid) before_seqs.push_back(get_u16(bytes.data() + 2));
      }
    }
  }
  relay.expire_sessions(now + 1900 * kMillisecond);
  CHECK(relay.sessions().at(idle_sid).phase == SessionPhase::Dead);
  CHECK(relay.sessions().at(keep_sid).phase == SessionPhase::Playing);

  // Relay wall-time forwarding cost stays comfortably under the bound.
  const RelayStats& st = relay.stats();
  REQUIRE(st.ingested > 0);
  const double mean_ns =
      static_cast<double>(st.forward_wall_ns_total) / static_cast<double>(st.ingested);
  CHECK(mean_ns < 2e6);                       // < 2 ms mean
  CHECK(st.forward_wall_ns_max < 5e6);        // < 5 ms worst case
}
