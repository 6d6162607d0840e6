#include "streamkit/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "streamkit/log.hpp"
#include "streamkit/report.hpp"

namespace streamkit {

namespace {

constexpr const char* kSenderHost = "10.0.0.1";
constexpr const char* kServerHost = "10.0.0.2";
constexpr const char* kReceiverHost = "10.0.0.3";
constexpr uint16_t kServerCtrlPort = 8554;
constexpr uint16_t kServerIngestPort = 5002;
constexpr uint16_t kServerRtpSrcPort = 5003;
constexpr uint16_t kReceiverRtpPort = 5004;
constexpr uint16_t kReceiverCtrlPort = 5005;
constexpr uint16_t kSenderRtpPort = 5006;
constexpr uint16_t kSenderCtrlPort = 5007;

Nanos ms_to_ns(double ms) { return static_cast<Nanos>(ms * 1e6); }

}  // namespace

std::string run_id_for(const ScenarioConfig& scenario) {
  return scenario.name + "-seed" + std::to_string(scenario.seed);
}

struct Experiment::Impl {
  ScenarioConfig cfg;
  EventLoop loop;
  Emulator emu;
  TraceStore traces;
  std::vector<SyncRound> sync_log;

  std::unique_ptr<RelayCore> relay;
  std::unique_ptr<SenderPipeline> sender;
  std::unique_ptr<ReceiverPipeline> receiver;

  Nanos sender_skew = 0;
  Nanos receiver_skew = 0;

  explicit Impl(const ScenarioConfig& scenario) : cfg(scenario), emu(loop, scenario.seed) {
    cfg.validate();
    sender_skew = ms_to_ns(cfg.sender_skew_ms);
    receiver_skew = ms_to_ns(cfg.receiver_skew_ms);

    // Topology: three hosts, profiles attached per directed hop.
    emu.register_host("sender", kSenderHost,
                      [this](const Datagram& d, Nanos) { sender->on_datagram(d); });
    emu.register_host("server", kServerHost,
                      [this](const Datagram& d, Nanos now) { server_datagram(d, now); });
    emu.register_host("receiver", kReceiverHost,
                      [this](const Datagram& d, Nanos) { receiver->on_datagram(d); });

    auto to_profile = [](const PathProfileConfig& p) {
      return NetworkProfile{ms_to_ns(p.delay_ms), ms_to_ns(p.jitter_ms), p.loss};
    };
    emu.set_profile("sender", "server", to_profile(cfg.sender_server));
    emu.set_profile("server", "sender", to_profile(cfg.sender_server));
    emu.set_profile("server", "receiver", to_profile(cfg.server_receiver));
    emu.set_profile("receiver", "server", to_profile(cfg.server_receiver));

    RelayConfig relay_cfg;
    relay_cfg.accepted_ssrcs = {cfg.live_ssrc, cfg.preroll_ssrc};
    relay_cfg.session_timeout = ms_to_ns(cfg.session_timeout_ms);
    relay_cfg.seed = cfg.seed;
    relay_cfg.fps = cfg.fps;
    relay = std::make_unique<RelayCore>(relay_cfg, &traces);

    SenderConfig sender_cfg;
    sender_cfg.encoder = EncoderConfig{cfg.fps, cfg.gop_length, cfg.idr_size, cfg.p_size,
                                       Rng::derive(cfg.seed, "encoder")};
    sender_cfg.source_file = cfg.source_file;
    sender_cfg.ssrc = cfg.live_ssrc;
    sender_cfg.preroll_ssrc = cfg.preroll_ssrc;
    sender_cfg.max_payload = cfg.max_payload;
    sender_cfg.encode_delay = ms_to_ns(cfg.encode_delay_ms);
    sender_cfg.server_ingest = {kServerHost, kServerIngestPort};
    sender_cfg.server_control = {kServerHost, kServerCtrlPort};
    sender_cfg.rtp_src_port = kSenderRtpPort;
    sender_cfg.ctrl_src_port = kSenderCtrlPort;
    sender = std::make_unique<SenderPipeline>(sender_cfg, env_for("sender", sender_skew),
                                              &traces, &sync_log);

    ReceiverConfig rx_cfg;
    rx_cfg.live_ssrc = cfg.live_ssrc;
    rx_cfg.preroll_ssrc = cfg.preroll_ssrc;
    rx_cfg.fps = cfg.fps;
    rx_cfg.policy.target_latency = ms_to_ns(cfg.target_latency_ms);
    rx_cfg.decode_delay = ms_to_ns(cfg.decode_delay_ms);
    rx_cfg.monitor = cfg.monitor;
    rx_cfg.handshake = cfg.handshake;
    rx_cfg.keepalive_interval = ms_to_ns(cfg.keepalive_interval_ms);
    rx_cfg.server_control = {kServerHost, kServerCtrlPort};
    rx_cfg.rtp_port = kReceiverRtpPort;
    rx_cfg.ctrl_src_port = kReceiverCtrlPort;
    receiver = std::make_unique<ReceiverPipeline>(rx_cfg, env_for("receiver", receiver_skew),
                                                  &traces, &sync_log);
  }

  EntityEnv env_for(const std::string& host, Nanos skew) {
    EntityEnv env;
    env.now_local = [this, skew] { return loop.now() + skew; };
    env.send = [this, host](uint16_t src_port, const NetAddress& to, Bytes bytes) {
      Datagram d{NetAddress{emu.address_of(host), src_port}, to, std::move(bytes)};
      emu.transmit(d, loop.now());
    };
    env.defer = [this](Nanos delay, std::function<void()> fn) {
      loop.post_in(delay, std::move(fn));
    };
    return env;
  }

  void server_datagram(const Datagram& d, Nanos now) {
    if (d.to.port == kServerCtrlPort) {
      ControlMessage resp = relay->handle_control_bytes(d.payload, d.from, now);
      const std::string text = render_message(resp);
      Datagram reply{NetAddress{kServerHost, kServerCtrlPort}, d.from,
                     Bytes(text.begin(), text.end())};
      emu.transmit(reply, now);
    } else if (d.to.port == kServerIngestPort) {
      for (const ForwardTarget& target : relay->ingest_and_fanout(d.payload, now)) {
        Datagram fwd{NetAddress{kServerHost, kServerRtpSrcPort}, target.to, d.payload};
        emu.transmit(fwd, now);
      }
    }
  }

  ExperimentResult run(const std::string& out_dir) {
    const Nanos stream_start = seconds(cfg.stream_start_s);
    const uint64_t frame_count =
        static_cast<uint64_t>(std::llround(cfg.duration_s * cfg.fps));

    // Handover schedule, outages drawn up front from a dedicated stream.
    if (cfg.handover_count > 0) {
      Rng rng(Rng::derive(cfg.seed, "handover"));
      std::vector<HandoverEvent> events;
      for (int k = 0; k < cfg.handover_count; ++k) {
        HandoverEvent ev;
        ev.at = seconds(cfg.handover_first_s + k * cfg.handover_spacing_s);
        ev.outage_duration =
            static_cast<Nanos>(rng.next_range(cfg.outage_min_ms, cfg.outage_max_ms) * 1e6);
        ev.new_address = "10.0.2." + std::to_string(k + 1);
        events.push_back(ev);
      }
      emu.schedule_handovers("receiver", events, [this](const std::string&, Nanos) {
        receiver->on_address_changed();
      });
    }

    // Relay housekeeping sweep.
    struct Sweep {
      Impl* self;
      void operator()() const {
        self->relay->expire_sessions(self->loop.now());
        self->loop.post_in(250 * kMillisecond, Sweep{self});
      }
    };
    loop.post_in(250 * kMillisecond, Sweep{this});

    receiver->start();
    sender->start();
    loop.post_at(stream_start, [this, frame_count] { sender->start_stream(frame_count); });

    ExperimentResult result;
    result.run_id = run_id_for(cfg);

    if (cfg.preroll_at_s > 0) {
      loop.post_at(stream_start + seconds(cfg.preroll_at_s),
                   [this, &result] { result.preroll = sender->send_preroll(); });
    }

    // Wind the receiver down right after the last frame lands, before
    // end-of-stream silence trips the outage detector.
    const Nanos stream_end = stream_start + seconds(cfg.duration_s);
    loop.post_at(stream_end + 80 * kMillisecond, [this] { receiver->shutdown(); });

    const Nanos end = stream_end + 2 * kSecond;
    loop.run_until(end);
    receiver->finalize();

    result.frames_sent = sender->frames_sent();
    result.counters = receiver->counters();
    result.traces = traces.all();
    for (const FrameTrace& t : result.traces) {
      if (t.ssrc == cfg.live_ssrc) result.live_outcomes[t.outcome]++;
    }
    result.preroll_received = receiver->preroll_received();
    result.relay_stats = relay->stats();
    result.emulator_stats = emu.stats();
    result.relay_sessions_created = relay->total_sessions_created();
    result.sender_offset_error = std::abs(sender->clock_offset() - (-sender_skew));
    result.receiver_offset_error = std::abs(receiver->clock_offset() - (-receiver_skew));

    // Recovery rows: receiver-observed times zipped with netem ground truth.
    const auto& ground = emu.outage_starts("receiver");
    const auto& events = receiver->recovery_events();
    if (ground.size() != events.size()) {
      SK_LOG_ERROR("recovery mismatch: %zu handovers, %zu recoveries", ground.size(),
                   events.size());
    }
    for (size_t i = 0; i < std::min(ground.size(), events.size()); ++i) {
      RecoveryRecordRow row;
      row.handover_id = static_cast<int>(i);
      row.outage_start = ground[i];
      row.detected = events[i].detected;
      row.session_established = events[i].session_established;
      row.first_display = events[i].first_display;
      result.recovery.push_back(row);
      result.recovery_events.push_back(events[i]);
    }

    // Latency summaries over displayed live frames.
    std::vector<Nanos> e2e, accum, network, sender_p, server_p, receiver_p;
    for (const FrameTrace& t : result.traces) {
      if (t.ssrc != cfg.live_ssrc || t.outcome != Outcome::Displayed) continue;
      LatencyBreakdown b = decompose(t);
      e2e.push_back(b.e2e);
      accum.push_back(b.accum_proc);
      network.push_back(b.network);
      sender_p.push_back(b.sender_proc);
      server_p.push_back(b.server_proc);
      receiver_p.push_back(b.receiver_proc);
    }
    auto add_summary = [&](const std::string& name, const std::vector<Nanos>& vals) {
      if (!vals.empty()) result.summaries.emplace_back(name, summarize(vals));
    };
    add_summary("e2e", e2e);
    add_summary("accum_proc", accum);
    add_summary("network", network);
    add_summary("sender_proc", sender_p);
    add_summary("server_proc", server_p);
    add_summary("receiver_proc", receiver_p);
    std::vector<Nanos> recovery_ns;
    for (const auto& r : result.recovery) recovery_ns.push_back(r.recovery());
    add_summary("recovery", recovery_ns);

    if (result.relay_stats.ingested > 0) {
      SK_LOG_INFO("relay forwarding wall cost: mean %.1f us, max %.1f us",
                  static_cast<double>(result.relay_stats.forward_wall_ns_total) /
                      static_cast<double>(result.relay_stats.ingested) / 1e3,
                  static_cast<double>(result.relay_stats.forward_wall_ns_max) / 1e3);
    }

    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      const std::string base = out_dir + "/";
      write_frames_csv(base + "frames.csv", result.run_id, result.traces);
      write_recovery_csv(base + "recovery.csv", result.run_id, result.recovery);
      write_summary_csv(base + "summary.csv", result.run_id, result.summaries);
      write_sync_csv(base + "sync.csv", result.run_id, sync_log);
      std::ofstream report(base + "report.txt", std::ios::binary | std::ios::trunc);
      if (!report) throw StreamError(Errc::io_error, "cannot write report.txt");
      report << render_report(out_dir);
    }
    return result;
  }
};

Experiment::Experiment(const ScenarioConfig& scenario) : impl_(new Impl(scenario)) {}
Experiment::~Experiment() = default;

Emulator& Experiment::emulator() { return impl_->emu; }
EventLoop& Experiment::loop() { return impl_->loop; }
const ScenarioConfig& Experiment::scenario() const { return impl_->cfg; }

ExperimentResult Experiment::run(const std::string& out_dir) { return impl_->run(out_dir); }

ExperimentResult run_experiment(const ScenarioConfig& scenario, const std::string& out_dir) {
  Experiment exp(scenario);
  return exp.run(out_dir);
}

}  // namespace streamkit
