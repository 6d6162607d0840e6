#include "streamkit/report.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "streamkit/metrics.hpp"

namespace streamkit {

namespace {

double ms(double ns) { return ns / 1e6; }

void latency_row(std::ostringstream& out, const char* label, const Summary& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "  %-14s %8zu %9.3f %9.3f %9.3f %9.3f %9.3f %9.3f\n",
                label, s.count, ms(s.mean), ms(s.min), ms(s.max), ms(s.p5), ms(s.p95),
                ms(s.stddev));
  out << buf;
}

}  // namespace

std::string render_report(const std::string& artifact_dir) {
  const std::vector<FrameTrace> traces = read_frames_csv(artifact_dir + "/frames.csv");
  const std::vector<RecoveryRecordRow> recovery =
      read_recovery_csv(artifact_dir + "/recovery.csv");

  std::ostringstream out;

  // Displayed/dropped accounting per stream.
  std::set<uint32_t> ssrcs;
  for (const auto& t : traces) ssrcs.insert(t.ssrc);

  for (uint32_t ssrc : ssrcs) {
    std::map<Outcome, size_t> counts;
    size_t total = 0;
    for (const auto& t : traces) {
      if (t.ssrc != ssrc) continue;
      counts[t.outcome]++;
      total++;
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "stream %08x: frames=%zu displayed=%zu late=%zu loss=%zu "
                  "need_idr=%zu in_flight=%zu\n",
                  ssrc, total, counts[Outcome::Displayed], counts[Outcome::DropLate],
                  counts[Outcome::DropLoss], counts[Outcome::DropNeedIdr],
                  counts[Outcome::InFlight]);
    out << buf;
  }

  for (uint32_t ssrc : ssrcs) {
    std::vector<Nanos> e2e, accum, network, sender_p, server_p, receiver_p;
    for (const auto& t : traces) {
      if (t.ssrc != ssrc || t.outcome != Outcome::Displayed) continue;
      LatencyBreakdown b = decompose(t);
      e2e.push_back(b.e2e);
      accum.push_back(b.accum_proc);
      network.push_back(b.network);
      sender_p.push_back(b.sender_proc);
      server_p.push_back(b.server_proc);
      receiver_p.push_back(b.receiver_proc);
    }
    if (e2e.empty()) continue;
    char head[128];
    std::snprintf(head, sizeof(head), "\nlatency, stream %08x (ms)\n", ssrc);
    out << head;
    out << "  stage             count      mean       min       max        p5       p95"
           "    stddev\n";
    latency_row(out, "e2e", summarize(e2e));
    latency_row(out, "accum_proc", summarize(accum));
    latency_row(out, "network", summarize(network));
    latency_row(out, "sender_proc", summarize(sender_p));
    latency_row(out, "server_proc", summarize(server_p));
    latency_row(out, "receiver_proc", summarize(receiver_p));
  }

  out << "\nrecovery\n";
  if (recovery.empty()) {
    out << "  (no handover operations)\n";
  } else {
    std::vector<Nanos> values;
    for (const auto& r : recovery) values.push_back(r.recovery());
    const Summary s = summarize(values);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "  handovers=%zu  min=%.1f ms  mean=%.1f ms  max=%.1f ms\n", s.count,
                  ms(s.min), ms(s.mean), ms(s.max));
    out << buf;
  }
  return out.str();
}

}  // namespace streamkit
