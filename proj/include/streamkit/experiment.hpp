#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamkit/config.hpp"
#include "streamkit/endpoints.hpp"
#include "streamkit/metrics.hpp"
#include "streamkit/netem.hpp"
#include "streamkit/relay.hpp"

namespace streamkit {

struct ExperimentResult {
  std::string run_id;
  uint64_t frames_sent = 0;
  ReceiverCounters counters;
  std::map<Outcome, size_t> live_outcomes;  // live ssrc only
  std::vector<FrameTrace> traces;
  std::vector<RecoveryRecordRow> recovery;
  std::vector<RecoveryEvent> recovery_events;  // receiver-side detail per row
  std::optional<PrerollInfo> preroll;
  std::vector<std::pair<uint64_t, uint32_t>> preroll_received;
  std::vector<std::pair<std::string, Summary>> summaries;
  RelayStats relay_stats;
  EmulatorStats emulator_stats;
  size_t relay_sessions_created = 0;
  Nanos sender_offset_error = 0;    // |estimate - true skew|
  Nanos receiver_offset_error = 0;
};

// One full scenario run: sender, relay and receiver wired through the
// deterministic emulator under virtual time. Construct, optionally poke the
// emulator (drop filters, extra profiles), then run().
class Experiment {
 public:
  explicit Experiment(const ScenarioConfig& scenario);
  ~Experiment();

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  Emulator& emulator();
  EventLoop& loop();
  const ScenarioConfig& scenario() const;

  // Runs to completion; writes frames.csv / recovery.csv / summary.csv /
  // sync.csv / report.txt into out_dir unless it is empty.
  ExperimentResult run(const std::string& out_dir = "");

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience wrapper used by the C API and CLI.
ExperimentResult run_experiment(const ScenarioConfig& scenario, const std::string& out_dir);

std::string run_id_for(const ScenarioConfig& scenario);

}  // namespace streamkit
