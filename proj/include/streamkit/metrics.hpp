#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "streamkit/common.hpp"

namespace streamkit {

// Per-frame pipeline stages, in order. All stored timestamps are on the
// server reference timeline.
enum class Stage {
  capture,
  encode_done,
  payload_done,
  sent,
  server_in,
  server_out,
  received,
  depayload_done,
  decode_done,
  display,
};
constexpr int kStageCount = 10;

const char* stage_name(Stage s);

enum class Outcome { InFlight, Displayed, DropLate, DropLoss, DropNeedIdr };

const char* outcome_name(Outcome o);
std::optional<Outcome> outcome_from(const std::string& name);

struct FrameTrace {
  uint32_t ssrc = 0;
  uint64_t frame_id = 0;
  std::optional<Nanos> stages[kStageCount];
  Outcome outcome = Outcome::InFlight;

  std::optional<Nanos> stage(Stage s) const { return stages[static_cast<int>(s)]; }
};

struct LatencyBreakdown {
  Nanos sender_proc = 0;
  Nanos server_proc = 0;
  Nanos receiver_proc = 0;
  Nanos accum_proc = 0;
  Nanos network = 0;
  Nanos e2e = 0;
};

// IncompleteTrace unless the frame was displayed with every stage present.
LatencyBreakdown decompose(const FrameTrace& trace);

struct Summary {
  size_t count = 0;
  double mean = 0;
  double min = 0;
  double max = 0;
  double p5 = 0;
  double p95 = 0;
  double stddev = 0;
};

// Empirical percentiles: the p-th percentile is the value at rank
// ceil(p/100 * n) of the ascending sort, 1-indexed. EmptySeries on empty
// input.
Summary summarize(const std::vector<Nanos>& values);

// Append-only store of frame traces keyed by (ssrc, frame_id); safe to
// append from intake and playout contexts concurrently.
class TraceStore {
 public:
  // DuplicateStage if the stage was already recorded for that frame.
  void record_stage(uint32_t ssrc, uint64_t frame_id, Stage stage, Nanos ts);
  bool has_stage(uint32_t ssrc, uint64_t frame_id, Stage stage) const;
  void set_outcome(uint32_t ssrc, uint64_t frame_id, Outcome out);

  std::vector<FrameTrace> all() const;
  size_t size() const;
  std::map<Outcome, size_t> outcome_counts() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<uint32_t, uint64_t>, FrameTrace> traces_;
};

// A clock-sync round observed by one entity, persisted so the raw->server
// correction stays auditable.
struct SyncRound {
  std::string entity;
  Nanos local_ts = 0;
  Nanos offset = 0;
  Nanos rtt = 0;
};

struct RecoveryRecordRow {
  int handover_id = 0;
  Nanos outage_start = 0;
  Nanos detected = 0;
  Nanos session_established = 0;
  Nanos first_display = 0;

  Nanos recovery() const { return session_established - outage_start; }
};

// CSV writers/readers. Schemas:
//   frames.csv   run_id,ssrc,frame_id,capture,encode_done,payload_done,sent,
//                server_in,server_out,received,depayload_done,decode_done,
//                display,outcome
//   recovery.csv run_id,handover_id,outage_start,detected,session_established,
//                first_display,recovery_ms
//   summary.csv  run_id,metric,count,mean,min,max,p5,p95,stddev
//   sync.csv     run_id,entity,local_ts,offset,rtt
// Integer nanoseconds, empty cell for absent timestamps.
void write_frames_csv(const std::string& path, const std::string& run_id,
                      const std::vector<FrameTrace>& traces);
void write_recovery_csv(const std::string& path, const std::string& run_id,
                        const std::vector<RecoveryRecordRow>& rows);
void write_summary_csv(const std::string& path, const std::string& run_id,
                       const std::vector<std::pair<std::string, Summary>>& metrics);
void write_sync_csv(const std::string& path, const std::string& run_id,
                    const std::vector<SyncRound>& rounds);

// SchemaMismatch on missing/odd headers; IoError on unreadable files.
std::vector<FrameTrace> read_frames_csv(const std::string& path);
std::vector<RecoveryRecordRow> read_recovery_csv(const std::string& path);

}  // namespace streamkit
