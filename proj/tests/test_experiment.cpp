#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "streamkit/experiment.hpp"
#include "streamkit/report.hpp"

using namespace streamkit;

namespace {

ScenarioConfig quick(const std::string& name, double duration_s, uint64_t seed) {
  ScenarioConfig cfg = ScenarioConfig::builtin(name);
  cfg.duration_s = duration_s;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

size_t live_count(const ExperimentResult& r, Outcome o) {
  auto it = r.live_outcomes.find(o);
  return it == r.live_outcomes.end() ? 0 : it->second;
}

}  // namespace

TEST_CASE("fog: zero-adversity run displays every frame") {
  ScenarioConfig cfg = quick("fog", 5, 1);
  cfg.sender_server.jitter_ms = 0;
  cfg.server_receiver.jitter_ms = 0;
  ExperimentResult r = run_experiment(cfg, "");
  CHECK(r.frames_sent == 150);
  CHECK(live_count(r, Outcome::Displayed) == 150);
  CHECK(r.counters.drop_late == 0);
  CHECK(r.counters.drop_loss == 0);
  CHECK(r.counters.drop_need_idr == 0);
}

TEST_CASE("fog: accounting conserves and decomposition is exact") {
  ExperimentResult r = run_experiment(quick("fog", 5, 2), "");
  size_t total = 0;
  for (const auto& [outcome, n] : r.live_outcomes) total += n;
  CHECK(total == r.frames_sent);

  size_t displayed_checked = 0;
  for (const FrameTrace& t : r.traces) {
    if (t.outcome != Outcome::Displayed) continue;
    LatencyBreakdown b = decompose(t);
    CHECK(b.e2e == b.accum_proc + b.network);
    // Stage stamps are monotone in pipeline order.
    Nanos prev = *t.stage(Stage::capture);
    for (int s = 1; s < kStageCount; ++s) {
      REQUIRE(t.stages[s].has_value());
      CHECK(*t.stages[s] >= prev);
      prev = *t.stages[s];
    }
    displayed_checked++;
  }
  CHECK(displayed_checked > 0);
}

TEST_CASE("fog with zero jitter: network component is exactly the two hops") {
  ScenarioConfig cfg = quick("fog", 4, 3);
  cfg.sender_server.jitter_ms = 0;
  cfg.server_receiver.jitter_ms = 0;
  ExperimentResult r = run_experiment(cfg, "");
  REQUIRE(live_count(r, Outcome::Displayed) > 0);
  for (const FrameTrace& t : r.traces) {
    if (t.outcome != Outcome::Displayed) continue;
    LatencyBreakdown b = decompose(t);
    CHECK(b.network == 50 * kMillisecond);
    // Clock skews are corrected exactly under zero jitter.
    CHECK(b.sender_proc == 25 * kMillisecond);
    CHECK(b.receiver_proc == 10 * kMillisecond);
  }
  CHECK(r.sender_offset_error == 0);
  CHECK(r.receiver_offset_error == 0);
}

TEST_CASE("handover: recoveries complete, stale sessions are never reused") {
  ScenarioConfig cfg = quick("handover", 9, 4);
  cfg.handover_count = 3;
  ExperimentResult r = run_experiment(cfg, "");
  REQUIRE(r.recovery.size() == 3);
  std::set<Nanos> outage_starts;
  std::set<std::string> session_ids;
  for (size_t i = 0; i < r.recovery.size(); ++i) {
    const auto& row = r.recovery[i];
    outage_starts.insert(row.outage_start);
    session_ids.insert(r.recovery_events[i].session_id);
    CHECK(row.outage_start <= row.detected);
    CHECK(row.detected <= row.session_established);
    CHECK(row.session_established <= row.first_display);
    CHECK(row.recovery() > 0);
    CHECK(row.recovery() < 600 * kMillisecond);
  }
  CHECK(outage_starts.size() == 3);
  // Exactly one fresh session per handover on top of the initial one.
  CHECK(session_ids.size() == 3);
  CHECK(r.relay_sessions_created == 4);
  // Frame accounting still conserves across the outages.
  size_t total = 0;
  for (const auto& [outcome, n] : r.live_outcomes) total += n;
  CHECK(total == r.frames_sent);
}

TEST_CASE("handover artifacts: csv files are written and the report renders") {
  const std::string dir = "exp_artifacts_test";
  std::filesystem::remove_all(dir);
  ScenarioConfig cfg = quick("handover", 9, 5);
  cfg.handover_count = 2;
  ExperimentResult r = run_experiment(cfg, dir);
  CHECK(std::filesystem::exists(dir + "/frames.csv"));
  CHECK(std::filesystem::exists(dir + "/recovery.csv"));
  CHECK(std::filesystem::exists(dir + "/summary.csv"));
  CHECK(std::filesystem::exists(dir + "/sync.csv"));
  CHECK(std::filesystem::exists(dir + "/report.txt"));

  auto rows = read_recovery_csv(dir + "/recovery.csv");
  REQUIRE(rows.size() == r.recovery.size());
  CHECK(rows[0].outage_start == r.recovery[0].outage_start);

  const std::string report = render_report(dir);
  CHECK(report.find("recovery") != std::string::npos);
  CHECK(report.find("handovers=2") != std::string::npos);
  CHECK(report == slurp(dir + "/report.txt"));
  // Pure function of the CSVs.
  CHECK(render_report(dir) == report);
  std::filesystem::remove_all(dir);
}

TEST_CASE("report on an empty directory is a schema error") {
  const std::string dir = "exp_empty_dir";
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(render_report(dir), StreamError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("same seed twice: byte-identical artifacts") {
  const std::string d1 = "exp_det_a";
  const std::string d2 = "exp_det_b";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  ScenarioConfig cfg = quick("handover", 7, 7);
  cfg.handover_count = 2;
  run_experiment(cfg, d1);
  run_experiment(cfg, d2);
  for (const char* f : {"frames.csv", "recovery.csv", "summary.csv", "sync.csv",
                        "report.txt"}) {
    CHECK(slurp(d1 + "/" + f) == slurp(d2 + "/" + f));
  }
  // A different seed produces different artifacts.
  ScenarioConfig other = cfg;
  other.seed = 8;
  const std::string d3 = "exp_det_c";
  std::filesystem::remove_all(d3);
  run_experiment(other, d3);
  CHECK(slurp(d1 + "/frames.csv") != slurp(d3 + "/frames.csv"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  std::filesystem::remove_all(d3);
}

TEST_CASE("pre-roll replays the snapshot through the relay to the subscriber") {
  ScenarioConfig cfg = quick("fog", 8, 9);
  cfg.preroll_at_s = 6;  // after 6 s of streaming
  ExperimentResult r = run_experiment(cfg, "");
  REQUIRE(r.preroll.has_value());
  CHECK(r.preroll->frame_count > 0);
  CHECK(r.preroll->capture_span <= 15 * kSecond);
  REQUIRE(r.preroll_received.size() == r.preroll->frames.size());
  CHECK(r.preroll_received == r.preroll->frames);
  CHECK(r.preroll->first_frame_id % 30 == 0);  // IDR boundary (gop 30)
}

TEST_CASE("targeted packet drop breaks exactly one dependency chain") {
  ScenarioConfig cfg = quick("fog", 4, 10);
  cfg.gop_length = 10;
  cfg.sender_server.jitter_ms = 0;
  cfg.server_receiver.jitter_ms = 0;

  Experiment exp(cfg);
  // Drop the first server->receiver packet of frame 4 (rtp ts 12000).
  bool dropped = false;
  exp.emulator().set_drop_filter([&dropped](const Datagram& d, Nanos) {
    if (dropped || d.payload.size() < kRtpHeaderSize) return false;
    if (d.from.port != 5003) return false;  // only the relay's rtp leg
    const uint32_t ts = get_u32(d.payload.data() + 4);
    if (ts == 12000) {
      dropped = true;
      return true;
    }
    return false;
  });
  ExperimentResult r = exp.run("");
  REQUIRE(dropped);

  std::map<uint64_t, Outcome> outcomes;
  for (const FrameTrace& t : r.traces) outcomes[t.frame_id] = t.outcome;
  CHECK(outcomes[4] == Outcome::DropLoss);
  for (uint64_t id = 5; id < 10; ++id) CHECK(outcomes[id] == Outcome::DropNeedIdr);
  CHECK(outcomes[10] == Outcome::Displayed);
  for (uint64_t id = 0; id < 4; ++id) CHECK(outcomes[id] == Outcome::Displayed);
}

TEST_CASE("an annex-b file can replace the synthetic encoder end to end") {
  // Build a small slice-only file: one IDR then P slices, 2 s at 30 fps.
  EncoderConfig ecfg;
  ecfg.fps = 30;
  ecfg.gop_length = 30;
  ecfg.idr_size = 5000;
  ecfg.p_size = 1200;
  ecfg.seed = 77;
  SyntheticEncoder enc(ecfg);
  std::vector<NalUnit> slices;
  for (int i = 0; i < 60; ++i) {
    EncodedFrame f = enc.generate(i);
    NalUnit bare;
    bare.header = f.nal_units.front().header;
    bare.payload.assign(f.nal_units.front().payload.begin() + kFrameMetaSize,
                        f.nal_units.front().payload.end());
    slices.push_back(std::move(bare));
  }
  const std::string path = "file_source_exp.264";
  {
    Bytes wire = serialize_annex_b(slices);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(wire.data()),
              static_cast<std::streamsize>(wire.size()));
  }

  ScenarioConfig cfg = quick("fog", 4, 12);
  cfg.sender_server.jitter_ms = 0;
  cfg.server_receiver.jitter_ms = 0;
  cfg.source_file = path;
  ExperimentResult r = run_experiment(cfg, "");
  CHECK(r.frames_sent == 60);  // stops when the file runs out
  CHECK(live_count(r, Outcome::Displayed) == 60);
  std::filesystem::remove(path);
}

TEST_CASE("cloud runs under loss still conserve accounting") {
  ExperimentResult r = run_experiment(quick("cloud", 5, 11), "");
  size_t total = 0;
  for (const auto& [outcome, n] : r.live_outcomes) total += n;
  CHECK(total == r.frames_sent);
  CHECK(r.frames_sent == 150);
  // LTE-shaped loss must actually drop something at this length.
  CHECK(live_count(r, Outcome::Displayed) < 150);
}
