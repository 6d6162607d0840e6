#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "streamkit/common.hpp"

namespace streamkit {

// Single-threaded virtual-time event loop. Events fire in timestamp order,
// ties broken by insertion order, and time never moves backwards.
class EventLoop {
 public:
  void post_at(Nanos at, std::function<void()> fn);
  void post_in(Nanos delay, std::function<void()> fn) { post_at(now_ + delay, std::move(fn)); }

  // Fires everything scheduled at or before `until`, then advances the
  // clock to `until`. Returns the number of events fired.
  size_t run_until(Nanos until);

  Nanos now() const { return now_; }
  bool empty() const { return queue_.empty(); }

 private:
  struct Item {
    Nanos at;
    uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Item& o) const {
      return at != o.at ? at > o.at : seq > o.seq;
    }
  };
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue_;
  Nanos now_ = 0;
  uint64_t next_seq_ = 0;
};

struct NetworkProfile {
  Nanos one_way_delay = 0;
  Nanos jitter_stddev = 0;
  double loss_rate = 0.0;

  void validate() const;
};

struct HandoverEvent {
  Nanos at = 0;
  Nanos outage_duration = 0;
  std::string new_address;  // host part only; ports are preserved
};

struct EmulatorStats {
  uint64_t sent = 0;
  uint64_t delivered = 0;
  uint64_t dropped_loss = 0;
  uint64_t dropped_outage = 0;
  uint64_t dropped_retired = 0;
  uint64_t dropped_filtered = 0;
};

// Deterministic UDP path emulator. Hosts register under a logical name with
// a current address; profiles attach to directed (from-host, to-host) pairs
// and survive address changes. A scripted handover opens an outage window
// around one host and atomically moves it to a new address at the window's
// end; the old address turns into a black hole.
class Emulator {
 public:
  using Handler = std::function<void(const Datagram&, Nanos now)>;
  // Invoked with (bytes, from, to, send_time); return true to drop.
  using DropFilter = std::function<bool(const Datagram&, Nanos)>;

  Emulator(EventLoop& loop, uint64_t seed);

  void register_host(const std::string& name, const std::string& address, Handler handler);
  void set_profile(const std::string& from_host, const std::string& to_host,
                   const NetworkProfile& profile);
  void set_default_profile(const NetworkProfile& profile) { default_profile_ = profile; }

  // Schedules handovers for `host`; events must be time-ordered and
  // non-overlapping (ConfigError otherwise). The host's handler is told
  // about the new address when the window closes.
  void schedule_handovers(const std::string& host, const std::vector<HandoverEvent>& events,
                          std::function<void(const std::string& new_address, Nanos now)>
                              on_address_changed = nullptr);

  // UnknownAddress if `to` was never a registered address. Drops are
  // silent for loss, outage windows and retired addresses.
  void transmit(const Datagram& dgram, Nanos now);

  void set_drop_filter(DropFilter filter) { drop_filter_ = std::move(filter); }

  const EmulatorStats& stats() const { return stats_; }
  std::string address_of(const std::string& host) const;
  // Ground-truth outage starts, in schedule order, for recovery metrics.
  const std::vector<Nanos>& outage_starts(const std::string& host) const;
  const std::vector<HandoverEvent>& handover_schedule(const std::string& host) const;

 private:
  struct Host {
    std::string name;
    std::string address;
    Handler handler;
    std::vector<HandoverEvent> handovers;
    std::vector<Nanos> outage_starts;
    std::function<void(const std::string&, Nanos)> on_address_changed;
  };

  Host* host_by_address(const std::string& address);
  const NetworkProfile& profile_for(const std::string& from_host,
                                    const std::string& to_host) const;
  bool in_outage(const Host& h, Nanos t) const;

  EventLoop& loop_;
  Rng rng_;
  std::map<std::string, Host> hosts_;          // by name
  std::map<std::string, std::string> by_addr_;  // address -> host name
  std::vector<std::string> retired_;
  std::map<std::pair<std::string, std::string>, NetworkProfile> profiles_;
  NetworkProfile default_profile_;
  DropFilter drop_filter_;
  EmulatorStats stats_;
};

}  // namespace streamkit
