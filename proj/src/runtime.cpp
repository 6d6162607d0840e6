#include "streamkit/runtime.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <queue>
#include <vector>

#include "streamkit/config.hpp"
#include "streamkit/endpoints.hpp"
#include "streamkit/log.hpp"
#include "streamkit/metrics.hpp"
#include "streamkit/relay.hpp"

namespace streamkit {

namespace {

Nanos wall_now() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int bind_udp(uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw StreamError(Errc::io_error, "socket(): " + std::string(strerror(errno)));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const int err = errno;
    ::close(fd);
    throw StreamError(Errc::io_error,
                      "bind(" + std::to_string(port) + "): " + strerror(err));
  }
  return fd;
}

sockaddr_in to_sockaddr(const NetAddress& a) {
  sockaddr_in out{};
  out.sin_family = AF_INET;
  out.sin_port = htons(a.port);
  if (inet_pton(AF_INET, a.host.c_str(), &out.sin_addr) != 1)
    throw StreamError(Errc::unknown_address, a.host);
  return out;
}

}  // namespace

struct RoleRunner::Impl {
  std::string role;
  IniFile ini;
  std::atomic<bool>* stop = nullptr;

  std::map<uint16_t, int> fds;  // src port -> fd
  struct Timer {
    Nanos at;
    uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Timer& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };
  std::priority_queue<Timer, std::vector<Timer>, std::greater<Timer>> timers;
  uint64_t timer_seq = 0;

  TraceStore traces;
  std::vector<SyncRound> sync_log;
  std::unique_ptr<RelayCore> relay;
  std::unique_ptr<SenderPipeline> sender;
  std::unique_ptr<ReceiverPipeline> receiver;
  std::string out_dir;
  std::string run_id;
  uint16_t relay_ctrl_port = 0;
  uint16_t relay_ingest_port = 0;

  void defer(Nanos delay, std::function<void()> fn) {
    timers.push(Timer{wall_now() + delay, timer_seq++, std::move(fn)});
  }

  void send_from(uint16_t src_port, const NetAddress& to, const Bytes& bytes) {
    auto it = fds.find(src_port);
    if (it == fds.end()) throw StreamError(Errc::io_error, "no socket for src port");
    sockaddr_in dst = to_sockaddr(to);
    ::sendto(it->second, bytes.data(), bytes.size(), 0,
             reinterpret_cast<sockaddr*>(&dst), sizeof(dst));
  }

  EntityEnv make_env() {
    EntityEnv env;
    env.now_local = [] { return wall_now(); };
    env.send = [this](uint16_t src_port, const NetAddress& to, Bytes bytes) {
      send_from(src_port, to, bytes);
    };
    env.defer = [this](Nanos delay, std::function<void()> fn) {
      defer(delay, std::move(fn));
    };
    return env;
  }

  void setup() {
    run_id = ini.get_str(role, "run_id", role + "-live");
    out_dir = ini.get_str(role, "out_dir", "out/" + role);

    const int fps = static_cast<int>(ini.get_int("stream", "fps", 30));
    const uint32_t live_ssrc =
        static_cast<uint32_t>(ini.get_int("stream", "live_ssrc", 0x11111111));
    const uint32_t preroll_ssrc =
        static_cast<uint32_t>(ini.get_int("stream", "preroll_ssrc", 0x22222222));

    if (role == "server") {
      relay_ctrl_port = static_cast<uint16_t>(std::stoi(ini.require("server", "control_port")));
      relay_ingest_port = static_cast<uint16_t>(std::stoi(ini.require("server", "ingest_port")));
      RelayConfig cfg;
      cfg.accepted_ssrcs = {live_ssrc, preroll_ssrc};
      cfg.session_timeout =
          static_cast<Nanos>(ini.get_double("server", "session_timeout_ms", 2000) * 1e6);
      cfg.seed = static_cast<uint64_t>(ini.get_int("stream", "seed", 0));
      cfg.fps = fps;
      relay = std::make_unique<RelayCore>(cfg, &traces);
      fds[relay_ctrl_port] = bind_udp(relay_ctrl_port);
      fds[relay_ingest_port] = bind_udp(relay_ingest_port);
      struct Sweep {
        Impl* self;
        void operator()() const {
          self->relay->expire_sessions(wall_now());
          self->defer(250 * kMillisecond, Sweep{self});
        }
      };
      defer(250 * kMillisecond, Sweep{this});
      SK_LOG_INFO("server listening: control %u, ingest %u", relay_ctrl_port,
                  relay_ingest_port);
    } else if (role == "sender") {
      SenderConfig cfg;
      cfg.encoder.fps = fps;
      cfg.encoder.gop_length = static_cast<uint64_t>(ini.get_int("stream", "gop_length", 30));
      cfg.encoder.idr_size = static_cast<size_t>(ini.get_int("stream", "idr_size", 20000));
      cfg.encoder.p_size = static_cast<size_t>(ini.get_int("stream", "p_size", 4000));
      cfg.encoder.seed = static_cast<uint64_t>(ini.get_int("stream", "seed", 0));
      cfg.source_file = ini.get_str("sender", "source_file", "");
      cfg.ssrc = live_ssrc;
      cfg.preroll_ssrc = preroll_ssrc;
      const std::string host = ini.require("sender", "server_host");
      cfg.server_ingest = {host,
                           static_cast<uint16_t>(std::stoi(ini.require("sender", "server_ingest_port")))};
      cfg.server_control = {host, static_cast<uint16_t>(
                                      std::stoi(ini.require("sender", "server_control_port")))};
      cfg.rtp_src_port = static_cast<uint16_t>(ini.get_int("sender", "rtp_src_port", 5006));
      cfg.ctrl_src_port = static_cast<uint16_t>(ini.get_int("sender", "ctrl_src_port", 5007));
      fds[cfg.rtp_src_port] = bind_udp(cfg.rtp_src_port);
      fds[cfg.ctrl_src_port] = bind_udp(cfg.ctrl_src_port);
      sender = std::make_unique<SenderPipeline>(cfg, make_env(), &traces, &sync_log);
      sender->start();
      sender->start_stream(UINT64_MAX);  // until signal
      const double preroll_at = ini.get_double("sender", "preroll_at_s", 0);
      if (preroll_at > 0) {
        defer(seconds(preroll_at), [this] {
          try {
            sender->send_preroll();
          } catch (const StreamError& e) {
            SK_LOG_ERROR("pre-roll failed: %s", e.what());
          }
        });
      }
      SK_LOG_INFO("sender streaming to %s", cfg.server_ingest.str().c_str());
    } else if (role == "receiver") {
      ReceiverConfig cfg;
      cfg.live_ssrc = live_ssrc;
      cfg.preroll_ssrc = preroll_ssrc;
      cfg.fps = fps;
      cfg.policy.target_latency =
          static_cast<Nanos>(ini.get_double("receiver", "target_latency_ms", 150) * 1e6);
      const std::string host = ini.require("receiver", "server_host");
      cfg.server_control = {host, static_cast<uint16_t>(
                                      std::stoi(ini.require("receiver", "server_control_port")))};
      cfg.rtp_port = static_cast<uint16_t>(std::stoi(ini.require("receiver", "rtp_port")));
      cfg.ctrl_src_port = static_cast<uint16_t>(ini.get_int("receiver", "ctrl_src_port", 5005));
      cfg.handshake.give_up_after =
          static_cast<Nanos>(ini.get_double("receiver", "connect_timeout_s", 10) * 1e9);
      fds[cfg.rtp_port] = bind_udp(cfg.rtp_port);
      fds[cfg.ctrl_src_port] = bind_udp(cfg.ctrl_src_port);
      receiver = std::make_unique<ReceiverPipeline>(cfg, make_env(), &traces, &sync_log);
      receiver->start();
      SK_LOG_INFO("receiver: server %s, rtp port %u", cfg.server_control.str().c_str(),
                  cfg.rtp_port);
    } else {
      throw StreamError(Errc::config_error, "unknown role '" + role + "'");
    }
  }

  void dispatch(uint16_t local_port, const Datagram& d) {
    if (relay) {
      const Nanos now = wall_now();
      if (local_port == relay_ctrl_port) {
        ControlMessage resp = relay->handle_control_bytes(d.payload, d.from, now);
        const std::string text = render_message(resp);
        send_from(relay_ctrl_port, d.from, Bytes(text.begin(), text.end()));
      } else {
        for (const ForwardTarget& t : relay->ingest_and_fanout(d.payload, now)) {
          send_from(relay_ingest_port, t.to, d.payload);
        }
      }
    } else if (sender) {
      sender->on_datagram(d);
    } else if (receiver) {
      receiver->on_datagram(d);
    }
  }

  void loop(std::atomic<bool>& stop_flag) {
    std::vector<pollfd> pfds;
    std::vector<uint16_t> ports;
    for (auto& [port, fd] : fds) {
      pfds.push_back(pollfd{fd, POLLIN, 0});
      ports.push_back(port);
    }
    Bytes buf(65536);
    while (!stop_flag.load()) {
      int timeout_ms = 20;
      if (!timers.empty()) {
        const Nanos delta = timers.top().at - wall_now();
        timeout_ms = delta <= 0 ? 0 : static_cast<int>(std::min<Nanos>(delta / kMillisecond, 20));
      }
      ::poll(pfds.data(), pfds.size(), timeout_ms);
      for (size_t i = 0; i < pfds.size(); ++i) {
        if (!(pfds[i].revents & POLLIN)) continue;
        for (;;) {
          sockaddr_in src{};
          socklen_t srclen = sizeof(src);
          const ssize_t n = ::recvfrom(pfds[i].fd, buf.data(), buf.size(), MSG_DONTWAIT,
                                       reinterpret_cast<sockaddr*>(&src), &srclen);
          if (n < 0) break;
          char ip[INET_ADDRSTRLEN] = {0};
          inet_ntop(AF_INET, &src.sin_addr, ip, sizeof(ip));
          Datagram d;
          d.from = {ip, ntohs(src.sin_port)};
          d.to = {"", ports[i]};
          d.payload.assign(buf.begin(), buf.begin() + n);
          dispatch(ports[i], d);
        }
      }
      const Nanos now = wall_now();
      while (!timers.empty() && timers.top().at <= now) {
        auto fn = timers.top().fn;
        timers.pop();
        fn();  // RecoveryTimeout propagates to run()
      }
    }
  }

  void flush_outputs() {
    std::filesystem::create_directories(out_dir);
    if (receiver) {
      receiver->shutdown();  // best-effort TEARDOWN on the way out
      receiver->finalize();
    }
    write_frames_csv(out_dir + "/frames.csv", run_id, traces.all());
    write_sync_csv(out_dir + "/sync.csv", run_id, sync_log);
    if (receiver) {
      // Real-socket mode has no netem ground truth; outage_start falls back
      // to the detection timestamp.
      std::vector<RecoveryRecordRow> rows;
      int id = 0;
      for (const RecoveryEvent& ev : receiver->recovery_events()) {
        RecoveryRecordRow row;
        row.handover_id = id++;
        row.outage_start = ev.detected;
        row.detected = ev.detected;
        row.session_established = ev.session_established;
        row.first_display = ev.first_display;
        rows.push_back(row);
      }
      write_recovery_csv(out_dir + "/recovery.csv", run_id, rows);
    }
    SK_LOG_INFO("%s: wrote CSV shards to %s", role.c_str(), out_dir.c_str());
  }

  ~Impl() {
    for (auto& [port, fd] : fds) ::close(fd);
  }
};

RoleRunner::RoleRunner(const std::string& role, const std::string& config_path)
    : impl_(new Impl) {
  impl_->role = role;
  impl_->ini = IniFile::load(config_path);
  impl_->setup();
}

RoleRunner::~RoleRunner() = default;

void RoleRunner::run() {
  try {
    impl_->loop(stop_);
  } catch (...) {
    impl_->flush_outputs();
    throw;
  }
  impl_->flush_outputs();
}

}  // namespace streamkit
