#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "streamkit/common.hpp"
#include "streamkit/recovery.hpp"

namespace streamkit {

// Flat `key = value` text with [section] headers; '#' starts a comment.
class IniFile {
 public:
  static IniFile parse(const std::string& text);
  static IniFile load(const std::string& path);

  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  // ConfigError naming the key when missing.
  std::string require(const std::string& section, const std::string& key) const;

  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;

  bool has_section(const std::string& section) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct PathProfileConfig {
  double delay_ms = 0;
  double jitter_ms = 0;
  double loss = 0;
};

// Everything one in-process experiment needs. Builtins:
//   fog      25 ms per hop, 1 ms jitter, no loss; processing stubs tuned so
//            accumulated processing sits near 35 ms.
//   cloud    37.5 ms per hop, 8 ms jitter, 0.5% loss (LTE-shaped).
//   handover fog topology at 3 ms per hop with 30 scheduled handovers,
//            outages drawn uniformly from [100, 250] ms.
struct ScenarioConfig {
  std::string name = "custom";

  int fps = 30;
  uint64_t gop_length = 30;
  size_t idr_size = 20000;
  size_t p_size = 4000;
  size_t max_payload = 1200;
  uint32_t live_ssrc = 0x11111111;
  uint32_t preroll_ssrc = 0x22222222;
  std::string source_file;  // non-empty: sender streams this Annex-B file

  double encode_delay_ms = 25;
  double decode_delay_ms = 10;
  double target_latency_ms = 150;
  double sender_skew_ms = -3;
  double receiver_skew_ms = 4;

  PathProfileConfig sender_server;
  PathProfileConfig server_receiver;

  double duration_s = 60;      // streaming duration
  double stream_start_s = 0.5; // sync + handshake warmup before frame 0

  int handover_count = 0;
  double handover_first_s = 3.0;
  double handover_spacing_s = 2.0;
  double outage_min_ms = 100;
  double outage_max_ms = 250;

  double preroll_at_s = 0;  // 0 disables the pre-roll trigger

  double session_timeout_ms = 2000;
  double keepalive_interval_ms = 500;
  MonitorConfig monitor;
  HandshakeConfig handshake;

  uint64_t seed = 0;

  void validate() const;

  static ScenarioConfig builtin(const std::string& name);
  static ScenarioConfig from_file(const std::string& path);
  // Builtin name or a path to a scenario file.
  static ScenarioConfig resolve(const std::string& name_or_path);
};

}  // namespace streamkit
