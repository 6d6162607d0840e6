#include "streamkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace streamkit {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::capture: return "capture";
    case Stage::encode_done: return "encode_done";
    case Stage::payload_done: return "payload_done";
    case Stage::sent: return "sent";
    case Stage::server_in: return "server_in";
    case Stage::server_out: return "server_out";
    case Stage::received: return "received";
    case Stage::depayload_done: return "depayload_done";
    case Stage::decode_done: return "decode_done";
    case Stage::display: return "display";
  }
  return "?";
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::InFlight: return "InFlight";
    case Outcome::Displayed: return "Displayed";
    case Outcome::DropLate: return "DropLate";
    case Outcome::DropLoss: return "DropLoss";
    case Outcome::DropNeedIdr: return "DropNeedIdr";
  }
  return "?";
}

std::optional<Outcome> outcome_from(const std::string& name) {
  for (Outcome o : {Outcome::InFlight, Outcome::Displayed, Outcome::DropLate,
                    Outcome::DropLoss, Outcome::DropNeedIdr}) {
    if (name == outcome_name(o)) return o;
  }
  return std::nullopt;
}

LatencyBreakdown decompose(const FrameTrace& t) {
  if (t.outcome != Outcome::Displayed)
    throw StreamError(Errc::incomplete_trace, "frame was not displayed");
  for (int i = 0; i < kStageCount; ++i) {
    if (!t.stages[i])
      throw StreamError(Errc::incomplete_trace,
                        std::string("missing stage ") + stage_name(static_cast<Stage>(i)));
  }
  auto at = [&](Stage s) { return *t.stage(s); };
  LatencyBreakdown b;
  b.sender_proc = (at(Stage::payload_done) - at(Stage::capture)) +
                  (at(Stage::sent) - at(Stage::payload_done));
  b.server_proc = at(Stage::server_out) - at(Stage::server_in);
  b.receiver_proc = at(Stage::display) - at(Stage::received);
  b.accum_proc = b.sender_proc + b.server_proc + b.receiver_proc;
  b.e2e = at(Stage::display) - at(Stage::capture);
  b.network = b.e2e - b.accum_proc;
  return b;
}

Summary summarize(const std::vector<Nanos>& values) {
  if (values.empty()) throw StreamError(Errc::empty_series, "no values");
  std::vector<Nanos> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();

  auto percentile = [&](double p) {
    size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    return static_cast<double>(sorted[rank - 1]);
  };

  Summary s;
  s.count = n;
  double sum = 0;
  for (Nanos v : sorted) sum += static_cast<double>(v);
  s.mean = sum / static_cast<double>(n);
  s.min = static_cast<double>(sorted.front());
  s.max = static_cast<double>(sorted.back());
  s.p5 = percentile(5);
  s.p95 = percentile(95);
  double var = 0;
  for (Nanos v : sorted) {
    const double d = static_cast<double>(v) - s.mean;
    var += d * d;
  }
  s.stddev = std::sqrt(var / static_cast<double>(n));
  return s;
}

void TraceStore::record_stage(uint32_t ssrc, uint64_t frame_id, Stage stage, Nanos ts) {
  std::lock_guard lk(mu_);
  FrameTrace& t = traces_[{ssrc, frame_id}];
  t.ssrc = ssrc;
  t.frame_id = frame_id;
  auto& slot = t.stages[static_cast<int>(stage)];
  if (slot)
    throw StreamError(Errc::duplicate_stage,
                      std::string(stage_name(stage)) + " already recorded for frame " +
                          std::to_string(frame_id));
  slot = ts;
}

bool TraceStore::has_stage(uint32_t ssrc, uint64_t frame_id, Stage stage) const {
  std::lock_guard lk(mu_);
  auto it = traces_.find({ssrc, frame_id});
  return it != traces_.end() && it->second.stage(stage).has_value();
}

void TraceStore::set_outcome(uint32_t ssrc, uint64_t frame_id, Outcome out) {
  std::lock_guard lk(mu_);
  FrameTrace& t = traces_[{ssrc, frame_id}];
  t.ssrc = ssrc;
  t.frame_id = frame_id;
  t.outcome = out;
}

std::vector<FrameTrace> TraceStore::all() const {
  std::lock_guard lk(mu_);
  std::vector<FrameTrace> out;
  out.reserve(traces_.size());
  for (const auto& [key, t] : traces_) out.push_back(t);
  return out;
}

size_t TraceStore::size() const {
  std::lock_guard lk(mu_);
  return traces_.size();
}

std::map<Outcome, size_t> TraceStore::outcome_counts() const {
  std::lock_guard lk(mu_);
  std::map<Outcome, size_t> counts;
  for (const auto& [key, t] : traces_) counts[t.outcome]++;
  return counts;
}

namespace {

constexpr const char* kFramesHeader =
    "run_id,ssrc,frame_id,capture,encode_done,payload_done,sent,server_in,"
    "server_out,received,depayload_done,decode_done,display,outcome";
constexpr const char* kRecoveryHeader =
    "run_id,handover_id,outage_start,detected,session_established,first_display,"
    "recovery_ms";
constexpr const char* kSummaryHeader =
    "run_id,metric,count,mean,min,max,p5,p95,stddev";
constexpr const char* kSyncHeader = "run_id,entity,local_ts,offset,rtt";

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StreamError(Errc::io_error, "cannot write " + path);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

int64_t cell_int(const std::string& s, const char* what) {
  try {
    size_t used = 0;
    int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw StreamError(Errc::schema_mismatch, std::string("bad ") + what + ": '" + s + "'");
  }
}

}  // namespace

void write_frames_csv(const std::string& path, const std::string& run_id,
                      const std::vector<FrameTrace>& traces) {
  auto out = open_out(path);
  out << kFramesHeader << "\n";
  for (const FrameTrace& t : traces) {
    out << run_id << ',' << t.ssrc << ',' << t.frame_id;
    for (int i = 0; i < kStageCount; ++i) {
      out << ',';
      if (t.stages[i]) out << *t.stages[i];
    }
    out << ',' << outcome_name(t.outcome) << "\n";
  }
}

void write_recovery_csv(const std::string& path, const std::string& run_id,
                        const std::vector<RecoveryRecordRow>& rows) {
  auto out = open_out(path);
  out << kRecoveryHeader << "\n";
  for (const auto& r : rows) {
    out << run_id << ',' << r.handover_id << ',' << r.outage_start << ',' << r.detected
        << ',' << r.session_established << ',' << r.first_display << ','
        << (r.recovery() / kMillisecond) << "\n";
  }
}

void write_summary_csv(const std::string& path, const std::string& run_id,
                       const std::vector<std::pair<std::string, Summary>>& metrics) {
  auto out = open_out(path);
  out << kSummaryHeader << "\n";
  char buf[512];
  for (const auto& [name, s] : metrics) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f",
                  run_id.c_str(), name.c_str(), s.count, s.mean, s.min, s.max, s.p5,
                  s.p95, s.stddev);
    out << buf << "\n";
  }
}

void write_sync_csv(const std::string& path, const std::string& run_id,
                    const std::vector<SyncRound>& rounds) {
  auto out = open_out(path);
  out << kSyncHeader << "\n";
  for (const auto& r : rounds) {
    out << run_id << ',' << r.entity << ',' << r.local_ts << ',' << r.offset << ','
        << r.rtt << "\n";
  }
}

std::vector<FrameTrace> read_frames_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StreamError(Errc::schema_mismatch, "missing " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(kFramesHeader))
    throw StreamError(Errc::schema_mismatch, "bad frames.csv header in " + path);
  std::vector<FrameTrace> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != 14)
      throw StreamError(Errc::schema_mismatch, "bad frames.csv row: " + line);
    FrameTrace t;
    t.ssrc = static_cast<uint32_t>(cell_int(cells[1], "ssrc"));
    t.frame_id = static_cast<uint64_t>(cell_int(cells[2], "frame_id"));
    for (int i = 0; i < kStageCount; ++i) {
      const std::string& cell = cells[3 + i];
      if (!cell.empty()) t.stages[i] = cell_int(cell, "stage");
    }
    auto oc = outcome_from(cells[13]);
    if (!oc) throw StreamError(Errc::schema_mismatch, "bad outcome: " + cells[13]);
    t.outcome = *oc;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RecoveryRecordRow> read_recovery_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StreamError(Errc::schema_mismatch, "missing " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(kRecoveryHeader))
    throw StreamError(Errc::schema_mismatch, "bad recovery.csv header in " + path);
  std::vector<RecoveryRecordRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != 7)
      throw StreamError(Errc::schema_mismatch, "bad recovery.csv row: " + line);
    RecoveryRecordRow r;
    r.handover_id = static_cast<int>(cell_int(cells[1], "handover_id"));
    r.outage_start = cell_int(cells[2], "outage_start");
    r.detected = cell_int(cells[3], "detected");
    r.session_established = cell_int(cells[4], "session_established");
    r.first_display = cell_int(cells[5], "first_display");
    out.push_back(r);
  }
  return out;
}

}  // namespace streamkit
