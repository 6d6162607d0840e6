#include "streamkit/endpoints.hpp"

#include <algorithm>

#include "streamkit/log.hpp"

namespace streamkit {

PlayoutDecision playout_decide(const FrameAssembly& assembly, Nanos capture_ts_sender,
                               Nanos clock_offset, Nanos now, const PlayoutPolicy& policy,
                               DecoderStubState& dec) {
  if (assembly.loss_detected || !assembly.complete) {
    dec.need_idr = true;
    return {PlayoutDecision::Kind::DropLoss, 0};
  }

  FrameKind kind;
  uint32_t stored_checksum;
  try {
    FrameMeta meta = read_frame_meta(assembly.nal_units);
    stored_checksum = meta.checksum;
    kind = assembly.nal_units.front().type() == kNalTypeIdr ? FrameKind::IDR : FrameKind::P;
  } catch (const StreamError&) {
    dec.need_idr = true;
    return {PlayoutDecision::Kind::DropLoss, 0};
  }

  // Reference-chain bookkeeping: a P frame needs the previous frame to have
  // been decoded. A gap (including frames that vanished without producing
  // any assembly) breaks the chain until the next IDR.
  FrameMeta meta = read_frame_meta(assembly.nal_units);
  if (kind == FrameKind::P) {
    const bool chain_intact =
        dec.last_decoded_frame_id && *dec.last_decoded_frame_id + 1 == meta.frame_id;
    if (dec.need_idr || !chain_intact) {
      dec.need_idr = true;
      return {PlayoutDecision::Kind::DropNeedIdr, 0};
    }
  }

  // Decode stub: the frame decodes iff its bytes survived intact.
  if (frame_checksum(assembly.nal_units) != stored_checksum) {
    dec.need_idr = true;
    return {PlayoutDecision::Kind::DropLoss, 0};
  }

  const Nanos deadline = (capture_ts_sender - clock_offset) + policy.target_latency;
  if (now > deadline) {
    dec.need_idr = true;
    return {PlayoutDecision::Kind::DropLate, 0};
  }

  if (kind == FrameKind::IDR) dec.need_idr = false;
  dec.last_decoded_frame_id = meta.frame_id;
  return {PlayoutDecision::Kind::Display, std::max(now, deadline)};
}

SenderPipeline::SenderPipeline(const SenderConfig& cfg, EntityEnv env, TraceStore* traces,
                               std::vector<SyncRound>* sync_log)
    : cfg_(cfg),
      env_(std::move(env)),
      traces_(traces),
      sync_log_(sync_log),
      encoder_(cfg.encoder),
      live_packetizer_(PacketizerConfig{cfg.ssrc, 0, 0, cfg.max_payload, cfg.encoder.fps}),
      ring_(cfg.ring_capacity) {
  if (!cfg_.source_file.empty()) {
    file_source_.emplace(cfg_.source_file, cfg_.encoder.fps);
  }
}

void SenderPipeline::send_sync_ping() {
  auto req = ControlMessage::request(Method::PING, "sync", next_cseq_++);
  req.t0 = env_.now_local();
  pending_pings_[req.cseq] = *req.t0;
  if (pending_pings_.size() > 64) pending_pings_.erase(pending_pings_.begin());
  const std::string text = render_message(req);
  env_.send(cfg_.ctrl_src_port, cfg_.server_control, Bytes(text.begin(), text.end()));
}

void SenderPipeline::start() {
  for (int i = 0; i < cfg_.sync_burst; ++i) {
    env_.defer(i * cfg_.sync_spacing, [this] { send_sync_ping(); });
  }
  // Periodic re-sync keeps the offset honest over long runs.
  struct Chain {
    SenderPipeline* self;
    void operator()() const {
      self->send_sync_ping();
      self->env_.defer(self->cfg_.sync_interval, Chain{self});
    }
  };
  env_.defer(cfg_.sync_interval, Chain{this});
}

void SenderPipeline::start_stream(uint64_t frame_count) {
  // `frame_count` more frames from here; UINT64_MAX streams until stopped.
  frames_to_send_ = frame_count == UINT64_MAX ? frame_count : frames_sent_ + frame_count;
  streaming_ = true;
  const Nanos period = kSecond / cfg_.encoder.fps;
  struct Chain {
    SenderPipeline* self;
    Nanos period;
    void operator()() const {
      if (!self->streaming_ || self->frames_sent_ >= self->frames_to_send_) return;
      self->tick();
      if (self->frames_sent_ < self->frames_to_send_) {
        self->env_.defer(period, Chain{self, period});
      }
    }
  };
  Chain{this, period}();
}

void SenderPipeline::tick() {
  const Nanos capture_local = env_.now_local();
  const Nanos capture_srv = to_server(capture_local);
  EncodedFrame frame;
  if (file_source_) {
    auto next = file_source_->generate(capture_srv);
    if (!next) {
      streaming_ = false;  // file exhausted
      return;
    }
    frame = std::move(*next);
  } else {
    frame = encoder_.generate(capture_srv);
  }
  ring_.push(frame);

  std::vector<RtpPacket> packets = live_packetizer_.packetize(frame);
  const Nanos done_srv = to_server(capture_local + cfg_.encode_delay);
  if (traces_) {
    traces_->record_stage(cfg_.ssrc, frame.frame_id, Stage::capture, capture_srv);
    traces_->record_stage(cfg_.ssrc, frame.frame_id, Stage::encode_done, done_srv);
    traces_->record_stage(cfg_.ssrc, frame.frame_id, Stage::payload_done, done_srv);
    traces_->record_stage(cfg_.ssrc, frame.frame_id, Stage::sent, done_srv);
  }
  frames_sent_++;

  std::vector<Bytes> wire;
  wire.reserve(packets.size());
  for (const auto& p : packets) wire.push_back(encode_packet(p));
  env_.defer(cfg_.encode_delay, [this, wire = std::move(wire)] {
    for (const auto& bytes : wire) env_.send(cfg_.rtp_src_port, cfg_.server_ingest, bytes);
  });
}

PrerollInfo SenderPipeline::send_preroll() {
  std::vector<EncodedFrame> frames = ring_.snapshot();  // EmptyBuffer propagates

  Packetizer preroll_packetizer(
      PacketizerConfig{cfg_.preroll_ssrc, 0, 0, cfg_.max_payload, cfg_.encoder.fps});
  PrerollInfo info;
  info.frame_count = frames.size();
  info.first_frame_id = frames.front().frame_id;
  info.last_frame_id = frames.back().frame_id;
  info.capture_span = frames.back().capture_ts - frames.front().capture_ts;

  // Replay is paced one frame per slot rather than blasted in one burst:
  // thousands of same-instant datagrams would reorder far beyond the
  // depacketizer's two-frame horizon. One frame per 10 ms still replays
  // 15 s of footage in ~4.5 s.
  const Nanos frame_gap = 10 * kMillisecond;
  Nanos slot = 0;
  for (const EncodedFrame& frame : frames) {
    info.frames.emplace_back(frame.frame_id, frame.payload_checksum);
    const Nanos send_srv = to_server(env_.now_local() + slot);
    if (traces_) {
      traces_->record_stage(cfg_.preroll_ssrc, frame.frame_id, Stage::capture,
                            frame.capture_ts);
      traces_->record_stage(cfg_.preroll_ssrc, frame.frame_id, Stage::encode_done, send_srv);
      traces_->record_stage(cfg_.preroll_ssrc, frame.frame_id, Stage::payload_done, send_srv);
      traces_->record_stage(cfg_.preroll_ssrc, frame.frame_id, Stage::sent, send_srv);
    }
    std::vector<Bytes> wire;
    for (const RtpPacket& p : preroll_packetizer.packetize(frame)) {
      wire.push_back(encode_packet(p));
    }
    env_.defer(slot, [this, wire = std::move(wire)] {
      for (const auto& bytes : wire) env_.send(cfg_.rtp_src_port, cfg_.server_ingest, bytes);
    });
    slot += frame_gap;
  }
  SK_LOG_INFO("pre-roll: %zu frames spanning %.2f s", info.frame_count,
              static_cast<double>(info.capture_span) / 1e9);
  return info;
}

void SenderPipeline::on_datagram(const Datagram& dgram) {
  const Nanos t3 = env_.now_local();
  ControlMessage msg;
  try {
    msg = parse_message(std::string(dgram.payload.begin(), dgram.payload.end()));
  } catch (const StreamError& e) {
    SK_LOG_DEBUG("sender: dropping control datagram: %s", e.what());
    return;
  }
  if (msg.kind != ControlMessage::Kind::Response) return;
  auto it = pending_pings_.find(msg.cseq);
  if (it == pending_pings_.end()) return;
  pending_pings_.erase(it);
  if (msg.t0 && msg.t1 && msg.t2) {
    SyncSample s{*msg.t0, *msg.t1, *msg.t2, t3};
    estimator_.add(s);
    if (sync_log_) {
      sync_log_->push_back(SyncRound{"sender", t3, s.offset(), s.rtt()});
    }
  }
}

ReceiverPipeline::ReceiverPipeline(const ReceiverConfig& cfg, EntityEnv env,
                                   TraceStore* traces, std::vector<SyncRound>* sync_log)
    : cfg_(cfg),
      env_(std::move(env)),
      traces_(traces),
      sync_log_(sync_log),
      live_depack_(cfg.live_ssrc),
      preroll_depack_(cfg.preroll_ssrc),
      monitor_(cfg.monitor),
      handshake_(cfg.handshake) {
  if (cfg_.fps <= 0) throw StreamError(Errc::config_error, "fps must be positive");
  if (cfg_.keepalive_interval >= 2 * kSecond)
    SK_LOG_INFO("receiver: keepalive interval close to session timeout");
  ts_step_ = (kRtpClockHz + cfg_.fps / 2) / cfg_.fps;
}

uint64_t ReceiverPipeline::frame_id_of(uint32_t rtp_ts) const {
  return static_cast<uint32_t>(rtp_ts - cfg_.rtp_ts_base) / ts_step_;
}

void ReceiverPipeline::start() {
  started_ = true;
  for (int i = 0; i < cfg_.sync_burst; ++i) {
    env_.defer(i * cfg_.sync_spacing, [this] { send_ping(PingPurpose::Sync, {}); });
  }
  struct Resync {
    ReceiverPipeline* self;
    void operator()() const {
      self->send_ping(PingPurpose::Sync, {});
      self->env_.defer(self->cfg_.sync_interval, Resync{self});
    }
  };
  env_.defer(cfg_.sync_interval, Resync{this});
  // Connect once the sync burst had a chance to land.
  env_.defer(cfg_.sync_burst * cfg_.sync_spacing + 50 * kMillisecond,
             [this] { begin_handshake(false); });
  struct Tick {
    ReceiverPipeline* self;
    void operator()() const {
      self->tick();
      self->env_.defer(self->cfg_.tick_period, Tick{self});
    }
  };
  env_.defer(cfg_.tick_period, Tick{this});
}

void ReceiverPipeline::send_ping(PingPurpose purpose, std::optional<std::string> session) {
  auto req = ControlMessage::request(Method::PING, cfg_.stream_name, next_cseq_++);
  // Keepalives refresh the session only; offset samples come from the
  // dedicated sync rounds and the probes, so the estimate does not wander
  // with every keepalive.
  const Nanos now = env_.now_local();
  if (purpose != PingPurpose::Keepalive) req.t0 = now;
  req.session_id = std::move(session);
  pending_pings_[req.cseq] = PendingPing{purpose, now};
  while (pending_pings_.size() > 64) pending_pings_.erase(pending_pings_.begin());
  const std::string text = render_message(req);
  env_.send(cfg_.ctrl_src_port, cfg_.server_control, Bytes(text.begin(), text.end()));
}

void ReceiverPipeline::begin_handshake(bool recovering) {
  handshake_recovering_ = recovering;
  session_id_.clear();  // the stale session is abandoned, never reused
  perform_handshake_action(handshake_.start(env_.now_local(), next_cseq_));
}

void ReceiverPipeline::perform_handshake_action(const HandshakeClient::Action& action) {
  using Kind = HandshakeClient::Action::Kind;
  if (action.kind == Kind::None) return;
  next_cseq_ = action.cseq + 1;
  ControlMessage req = ControlMessage::request(
      action.kind == Kind::SendSetup ? Method::SETUP : Method::PLAY, cfg_.stream_name,
      action.cseq);
  if (action.kind == Kind::SendSetup) {
    req.client_rtp_port = cfg_.rtp_port;
  } else {
    req.session_id = action.session_id;
  }
  const std::string text = render_message(req);
  env_.send(cfg_.ctrl_src_port, cfg_.server_control, Bytes(text.begin(), text.end()));
}

void ReceiverPipeline::shutdown() {
  if (stopped_) return;
  stopped_ = true;
  if (!session_id_.empty()) {
    auto req = ControlMessage::request(Method::TEARDOWN, cfg_.stream_name, next_cseq_++);
    req.session_id = session_id_;
    const std::string text = render_message(req);
    env_.send(cfg_.ctrl_src_port, cfg_.server_control, Bytes(text.begin(), text.end()));
    session_id_.clear();
  }
}

void ReceiverPipeline::tick() {
  if (stopped_) return;
  const Nanos now = env_.now_local();

  const ConnectivityPhase before = monitor_.phase();
  MonitorActions actions = monitor_.tick(now);
  if (before == ConnectivityPhase::Healthy &&
      monitor_.phase() == ConnectivityPhase::SuspectedDown && !session_id_.empty() &&
      !pending_recovery_) {
    pending_recovery_ = RecoveryEvent{};
    pending_recovery_->detected = to_server(now);
    SK_LOG_INFO("receiver: rtp silence detected at local %.3f s",
                static_cast<double>(now) / 1e9);
  }
  if (actions.send_probe) send_ping(PingPurpose::Probe, {});

  if (handshake_.active()) {
    perform_handshake_action(handshake_.tick(now));  // RecoveryTimeout propagates
  }

  if (!session_id_.empty() && monitor_.phase() == ConnectivityPhase::Healthy &&
      now - last_keepalive_ >= cfg_.keepalive_interval) {
    last_keepalive_ = now;
    send_ping(PingPurpose::Keepalive, session_id_);
  }
}

void ReceiverPipeline::on_address_changed() {
  const Nanos now = env_.now_local();
  SK_LOG_INFO("receiver: address changed at local %.3f s", static_cast<double>(now) / 1e9);
  MonitorActions actions = monitor_.on_address_changed(now);
  if (actions.send_probe) send_ping(PingPurpose::Probe, {});
  if (pending_recovery_ == std::nullopt &&
      monitor_.phase() != ConnectivityPhase::Healthy) {
    pending_recovery_ = RecoveryEvent{};
    pending_recovery_->detected = to_server(now);
  }
}

void ReceiverPipeline::on_datagram(const Datagram& dgram) {
  if (dgram.to.port == cfg_.rtp_port) {
    on_rtp(dgram);
  } else {
    on_control(dgram);
  }
}

void ReceiverPipeline::on_control(const Datagram& dgram) {
  const Nanos now = env_.now_local();
  ControlMessage msg;
  try {
    msg = parse_message(std::string(dgram.payload.begin(), dgram.payload.end()));
  } catch (const StreamError& e) {
    SK_LOG_DEBUG("receiver: dropping control datagram: %s", e.what());
    return;
  }
  if (msg.kind != ControlMessage::Kind::Response) return;

  if (auto it = pending_pings_.find(msg.cseq); it != pending_pings_.end()) {
    const PendingPing ping = it->second;
    pending_pings_.erase(it);
    if (msg.t0 && msg.t1 && msg.t2) {
      SyncSample s{*msg.t0, *msg.t1, *msg.t2, now};
      estimator_.add(s);
      if (sync_log_) sync_log_->push_back(SyncRound{"receiver", now, s.offset(), s.rtt()});
    }
    if (ping.purpose == PingPurpose::Probe && msg.status == 200) {
      MonitorActions actions = monitor_.on_probe_ok(now);
      if (actions.start_handshake) begin_handshake(true);
    } else if (ping.purpose == PingPurpose::Keepalive && msg.status == 454) {
      SK_LOG_INFO("receiver: keepalive found session gone; reconnecting");
      if (!handshake_.active()) begin_handshake(true);
    }
    return;
  }

  if (handshake_.active()) {
    perform_handshake_action(handshake_.on_response(msg.cseq, msg.status, msg.session_id, now));
    if (handshake_.done()) {
      const HandshakeOutcome& hs = handshake_.outcome();
      session_id_ = hs.session_id;
      last_keepalive_ = now;
      SK_LOG_INFO("receiver: session %s established (%d attempt(s))", session_id_.c_str(),
                  hs.attempts);
      if (handshake_recovering_) {
        if (pending_recovery_) {
          pending_recovery_->session_established = to_server(hs.established_at);
          pending_recovery_->session_id = session_id_;
          awaiting_first_display_ = true;
        }
        monitor_.on_recovered(now);
        live_dec_.need_idr = true;
        // Anything still buffered belongs to the dead session's stream
        // position; the new session restarts at an IDR gate.
        live_depack_ = Depacketizer(cfg_.live_ssrc);
      }
    }
  }
}

void ReceiverPipeline::on_rtp(const Datagram& dgram) {
  const Nanos now = env_.now_local();
  RtpPacket pkt;
  try {
    pkt = decode_packet(dgram.payload);
  } catch (const StreamError& e) {
    SK_LOG_DEBUG("receiver: bad rtp datagram: %s", e.what());
    return;
  }
  counters_.rtp_packets++;
  if (pkt.ssrc != cfg_.live_ssrc && pkt.ssrc != cfg_.preroll_ssrc) {
    counters_.foreign_ssrc++;
    return;
  }
  // When the outage detector was waiting on a new session's first packet,
  // this arrival is what flips Recovered back to Healthy.
  monitor_.on_rtp(now);

  if (pkt.ssrc == cfg_.live_ssrc) {
    for (const FrameAssembly& a : live_depack_.push(pkt, now)) process_live_assembly(a);
  } else {
    for (const FrameAssembly& a : preroll_depack_.push(pkt, now)) process_preroll_assembly(a);
  }
}

void ReceiverPipeline::process_live_assembly(const FrameAssembly& assembly) {
  const uint64_t frame_id = frame_id_of(assembly.rtp_timestamp);
  const Nanos completion_local = assembly.last_arrival_ts;
  const Nanos decide_local = completion_local + cfg_.decode_delay;

  if (traces_) {
    traces_->record_stage(cfg_.live_ssrc, frame_id, Stage::received,
                          to_server(completion_local));
  }

  Nanos capture_srv = 0;
  if (assembly.complete) {
    if (traces_) {
      traces_->record_stage(cfg_.live_ssrc, frame_id, Stage::depayload_done,
                            to_server(completion_local));
    }
    try {
      capture_srv = read_frame_meta(assembly.nal_units).capture_ts;
    } catch (const StreamError&) {
      capture_srv = 0;  // playout_decide will classify this as loss
    }
  }

  const std::optional<uint64_t> prev_displayed = live_dec_.last_decoded_frame_id;
  PlayoutDecision decision = playout_decide(assembly, capture_srv, clock_offset(),
                                            decide_local, cfg_.policy, live_dec_);
  switch (decision.kind) {
    case PlayoutDecision::Kind::Display: {
      if (prev_displayed && frame_id <= *prev_displayed) {
        SK_LOG_ERROR("display order violation: frame %llu after %llu",
                     static_cast<unsigned long long>(frame_id),
                     static_cast<unsigned long long>(*prev_displayed));
      }
      counters_.displayed++;
      if (traces_) {
        traces_->record_stage(cfg_.live_ssrc, frame_id, Stage::decode_done,
                              to_server(decide_local));
        traces_->record_stage(cfg_.live_ssrc, frame_id, Stage::display,
                              to_server(decide_local));
        traces_->set_outcome(cfg_.live_ssrc, frame_id, Outcome::Displayed);
      }
      if (awaiting_first_display_ && pending_recovery_) {
        pending_recovery_->first_display = to_server(decide_local);
        pending_recovery_->first_display_is_idr =
            assembly.nal_units.front().type() == kNalTypeIdr;
        recovery_events_.push_back(*pending_recovery_);
        pending_recovery_.reset();
        awaiting_first_display_ = false;
      }
      break;
    }
    case PlayoutDecision::Kind::DropLate:
      counters_.drop_late++;
      if (traces_) {
        traces_->record_stage(cfg_.live_ssrc, frame_id, Stage::decode_done,
                              to_server(decide_local));
        traces_->set_outcome(cfg_.live_ssrc, frame_id, Outcome::DropLate);
      }
      break;
    case PlayoutDecision::Kind::DropLoss:
      counters_.drop_loss++;
      if (traces_) traces_->set_outcome(cfg_.live_ssrc, frame_id, Outcome::DropLoss);
      break;
    case PlayoutDecision::Kind::DropNeedIdr:
      counters_.drop_need_idr++;
      if (traces_) traces_->set_outcome(cfg_.live_ssrc, frame_id, Outcome::DropNeedIdr);
      break;
  }
}

void ReceiverPipeline::process_preroll_assembly(const FrameAssembly& assembly) {
  const uint64_t frame_id = frame_id_of(assembly.rtp_timestamp);
  const Nanos completion_local = assembly.last_arrival_ts;
  const Nanos decide_local = completion_local + cfg_.decode_delay;
  if (traces_) {
    traces_->record_stage(cfg_.preroll_ssrc, frame_id, Stage::received,
                          to_server(completion_local));
  }
  // Replayed context frames are shown as fast as they decode; the deadline
  // policy does not apply to historical footage.
  if (!assembly.complete || assembly.loss_detected) {
    preroll_dec_.need_idr = true;
    if (traces_) traces_->set_outcome(cfg_.preroll_ssrc, frame_id, Outcome::DropLoss);
    return;
  }
  if (traces_) {
    traces_->record_stage(cfg_.preroll_ssrc, frame_id, Stage::depayload_done,
                          to_server(completion_local));
  }
  FrameMeta meta;
  try {
    meta = read_frame_meta(assembly.nal_units);
  } catch (const StreamError&) {
    preroll_dec_.need_idr = true;
    if (traces_) traces_->set_outcome(cfg_.preroll_ssrc, frame_id, Outcome::DropLoss);
    return;
  }
  const bool idr = assembly.nal_units.front().type() == kNalTypeIdr;
  if (!idr) {
    const bool chain_intact = preroll_dec_.last_decoded_frame_id &&
                              *preroll_dec_.last_decoded_frame_id + 1 == meta.frame_id;
    if (preroll_dec_.need_idr || !chain_intact) {
      preroll_dec_.need_idr = true;
      if (traces_) traces_->set_outcome(cfg_.preroll_ssrc, frame_id, Outcome::DropNeedIdr);
      return;
    }
  }
  if (frame_checksum(assembly.nal_units) != meta.checksum) {
    preroll_dec_.need_idr = true;
    if (traces_) traces_->set_outcome(cfg_.preroll_ssrc, frame_id, Outcome::DropLoss);
    return;
  }
  if (idr) preroll_dec_.need_idr = false;
  preroll_dec_.last_decoded_frame_id = meta.frame_id;
  preroll_received_.emplace_back(meta.frame_id, meta.checksum);
  if (traces_) {
    traces_->record_stage(cfg_.preroll_ssrc, frame_id, Stage::decode_done,
                          to_server(decide_local));
    traces_->record_stage(cfg_.preroll_ssrc, frame_id, Stage::display,
                          to_server(decide_local));
    traces_->set_outcome(cfg_.preroll_ssrc, frame_id, Outcome::Displayed);
  }
}

void ReceiverPipeline::finalize() {
  for (const FrameAssembly& a : live_depack_.flush()) process_live_assembly(a);
  for (const FrameAssembly& a : preroll_depack_.flush()) process_preroll_assembly(a);
}

}  // namespace streamkit
