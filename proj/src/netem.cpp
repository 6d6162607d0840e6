#include "streamkit/netem.hpp"

#include <algorithm>

#include "streamkit/log.hpp"

namespace streamkit {

void EventLoop::post_at(Nanos at, std::function<void()> fn) {
  if (at < now_) at = now_;
  queue_.push(Item{at, next_seq_++, std::move(fn)});
}

size_t EventLoop::run_until(Nanos until) {
  size_t fired = 0;
  while (!queue_.empty() && queue_.top().at <= until) {
    // Copy out before popping; the handler may post new events.
    Item item = queue_.top();
    queue_.pop();
    now_ = item.at;
    item.fn();
    ++fired;
  }
  if (until > now_) now_ = until;
  return fired;
}

void NetworkProfile::validate() const {
  if (loss_rate < 0.0 || loss_rate > 1.0)
    throw StreamError(Errc::config_error, "loss_rate must be in [0,1]");
  if (one_way_delay < 0)
    throw StreamError(Errc::config_error, "one_way_delay must be >= 0");
  if (jitter_stddev < 0)
    throw StreamError(Errc::config_error, "jitter_stddev must be >= 0");
}

Emulator::Emulator(EventLoop& loop, uint64_t seed)
    : loop_(loop), rng_(Rng::derive(seed, "netem")) {}

void Emulator::register_host(const std::string& name, const std::string& address,
                             Handler handler) {
  if (hosts_.count(name)) throw StreamError(Errc::config_error, "duplicate host " + name);
  if (by_addr_.count(address))
    throw StreamError(Errc::config_error, "duplicate address " + address);
  hosts_[name] = Host{name, address, std::move(handler), {}, {}, nullptr};
  by_addr_[address] = name;
}

void Emulator::set_profile(const std::string& from_host, const std::string& to_host,
                           const NetworkProfile& profile) {
  profile.validate();
  profiles_[{from_host, to_host}] = profile;
}

const NetworkProfile& Emulator::profile_for(const std::string& from_host,
                                            const std::string& to_host) const {
  auto it = profiles_.find({from_host, to_host});
  return it != profiles_.end() ? it->second : default_profile_;
}

void Emulator::schedule_handovers(
    const std::string& host, const std::vector<HandoverEvent>& events,
    std::function<void(const std::string&, Nanos)> on_address_changed) {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) throw StreamError(Errc::config_error, "unknown host " + host);
  Nanos prev_end = -1;
  for (const auto& ev : events) {
    if (ev.at <= prev_end)
      throw StreamError(Errc::config_error, "overlapping handover events");
    if (ev.outage_duration < 0)
      throw StreamError(Errc::config_error, "negative outage duration");
    prev_end = ev.at + ev.outage_duration;
  }
  it->second.handovers = events;
  it->second.on_address_changed = std::move(on_address_changed);
  for (const auto& ev : events) {
    it->second.outage_starts.push_back(ev.at);
    loop_.post_at(ev.at + ev.outage_duration, [this, host, ev] {
      Host& h = hosts_.at(host);
      retired_.push_back(h.address);
      by_addr_.erase(h.address);
      by_addr_[ev.new_address] = host;
      h.address = ev.new_address;
      SK_LOG_DEBUG("handover: %s now at %s", host.c_str(), ev.new_address.c_str());
      if (h.on_address_changed) h.on_address_changed(ev.new_address, loop_.now());
    });
  }
}

bool Emulator::in_outage(const Host& h, Nanos t) const {
  for (const auto& ev : h.handovers) {
    if (t >= ev.at && t < ev.at + ev.outage_duration) return true;
  }
  return false;
}

Emulator::Host* Emulator::host_by_address(const std::string& address) {
  auto it = by_addr_.find(address);
  return it == by_addr_.end() ? nullptr : &hosts_.at(it->second);
}

std::string Emulator::address_of(const std::string& host) const {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) throw StreamError(Errc::config_error, "unknown host " + host);
  return it->second.address;
}

const std::vector<Nanos>& Emulator::outage_starts(const std::string& host) const {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) throw StreamError(Errc::config_error, "unknown host " + host);
  return it->second.outage_starts;
}

const std::vector<HandoverEvent>& Emulator::handover_schedule(const std::string& host) const {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) throw StreamError(Errc::config_error, "unknown host " + host);
  return it->second.handovers;
}

void Emulator::transmit(const Datagram& dgram, Nanos now) {
  stats_.sent++;
  if (drop_filter_ && drop_filter_(dgram, now)) {
    stats_.dropped_filtered++;
    return;
  }

  Host* to = host_by_address(dgram.to.host);
  if (to == nullptr) {
    if (std::find(retired_.begin(), retired_.end(), dgram.to.host) != retired_.end()) {
      stats_.dropped_retired++;  // black hole
      return;
    }
    throw StreamError(Errc::unknown_address, dgram.to.str());
  }
  Host* from = host_by_address(dgram.from.host);
  if (from == nullptr) {
    stats_.dropped_retired++;
    return;
  }

  if (in_outage(*from, now) || in_outage(*to, now)) {
    stats_.dropped_outage++;
    return;
  }

  const NetworkProfile& prof = profile_for(from->name, to->name);
  if (prof.loss_rate > 0.0 && rng_.next_unit() < prof.loss_rate) {
    stats_.dropped_loss++;
    return;
  }
  Nanos delay = prof.one_way_delay;
  if (prof.jitter_stddev > 0) {
    delay += static_cast<Nanos>(rng_.next_gaussian() *
                                static_cast<double>(prof.jitter_stddev));
    if (delay < 0) delay = 0;
  }
  const Nanos at = now + delay;

  // Nothing may be delivered into an outage window, including packets that
  // were already in flight when the window opened.
  if (in_outage(*to, at)) {
    stats_.dropped_outage++;
    return;
  }

  const std::string to_name = to->name;
  const std::string dest_addr = dgram.to.host;
  loop_.post_at(at, [this, dgram, to_name, dest_addr] {
    const Host& h = hosts_.at(to_name);
    if (h.address != dest_addr) {
      stats_.dropped_retired++;  // address retired while in flight
      return;
    }
    stats_.delivered++;
    h.handler(dgram, loop_.now());
  });
}

}  // namespace streamkit
