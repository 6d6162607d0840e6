#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "streamkit/config.hpp"

using namespace streamkit;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::ofstream out(name, std::ios::trunc);
  out << content;
  return name;
}

}  // namespace

TEST_CASE("ini parsing: sections, comments, whitespace") {
  IniFile ini = IniFile::parse(
      "# comment\n"
      "duration_s = 12.5\n"
      "[sender]\n"
      "fps = 25   # trailing comment\n"
      "  gop_length=15\n"
      "\n"
      "[network]\n"
      "delay_ms = 37.5\n");
  CHECK(ini.get("", "duration_s") == "12.5");
  CHECK(ini.get_int("sender", "fps", 0) == 25);
  CHECK(ini.get_int("sender", "gop_length", 0) == 15);
  CHECK(ini.get_double("network", "delay_ms", 0) == 37.5);
  CHECK(!ini.get("sender", "missing").has_value());
  CHECK(ini.get_int("sender", "missing", 9) == 9);
  CHECK(ini.has_section("network"));
  CHECK(!ini.has_section("receiver"));
}

TEST_CASE("ini errors: bad lines and missing keys are named") {
  CHECK_THROWS_AS(IniFile::parse("[broken\n"), StreamError);
  CHECK_THROWS_AS(IniFile::parse("just a line\n"), StreamError);
  IniFile ini = IniFile::parse("[sender]\nfps = x\n");
  CHECK_THROWS_AS(ini.get_int("sender", "fps", 0), StreamError);
  try {
    ini.require("sender", "server_host");
    FAIL("expected ConfigError");
  } catch (const StreamError& e) {
    CHECK(e.code() == Errc::config_error);
    CHECK(std::string(e.what()).find("server_host") != std::string::npos);
  }
}

TEST_CASE("builtin scenarios carry the calibrated profiles") {
  ScenarioConfig fog = ScenarioConfig::builtin("fog");
  CHECK(fog.sender_server.delay_ms == 25.0);
  CHECK(fog.server_receiver.delay_ms == 25.0);
  CHECK(fog.sender_server.loss == 0.0);
  CHECK(fog.duration_s == 60);
  CHECK(fog.handover_count == 0);

  ScenarioConfig cloud = ScenarioConfig::builtin("cloud");
  CHECK(cloud.sender_server.delay_ms == 36.5);
  CHECK(cloud.sender_server.jitter_ms == 2.0);
  CHECK(cloud.sender_server.loss == 0.005);

  ScenarioConfig handover = ScenarioConfig::builtin("handover");
  CHECK(handover.handover_count == 30);
  CHECK(handover.outage_min_ms == 100);
  CHECK(handover.outage_max_ms == 250);

  CHECK_THROWS_AS(ScenarioConfig::builtin("v2v"), StreamError);
}

TEST_CASE("scenario files override builtin-style defaults") {
  const std::string path = write_temp(
      "scenario_test.cfg",
      "duration_s = 5\n"
      "[sender]\n"
      "fps = 20\n"
      "gop_length = 10\n"
      "encode_delay_ms = 3\n"
      "[receiver]\n"
      "target_latency_ms = 120\n"
      "rtp_silence_timeout_ms = 80\n"
      "[network]\n"
      "delay_ms = 10\n"
      "jitter_ms = 0.5\n"
      "sender_server_delay_ms = 12\n"
      "[handover]\n"
      "count = 3\n"
      "outage_min_ms = 50\n"
      "outage_max_ms = 90\n");
  ScenarioConfig cfg = ScenarioConfig::from_file(path);
  CHECK(cfg.fps == 20);
  CHECK(cfg.duration_s == 5);
  CHECK(cfg.encode_delay_ms == 3);
  CHECK(cfg.target_latency_ms == 120);
  CHECK(cfg.monitor.rtp_silence_timeout == 80 * kMillisecond);
  CHECK(cfg.sender_server.delay_ms == 12);    // per-path override
  CHECK(cfg.server_receiver.delay_ms == 10);  // section default
  CHECK(cfg.server_receiver.jitter_ms == 0.5);
  CHECK(cfg.handover_count == 3);
  remove(path.c_str());
}

TEST_CASE("scenario validation rejects nonsense") {
  ScenarioConfig cfg = ScenarioConfig::builtin("fog");
  cfg.fps = 0;
  CHECK_THROWS_AS(cfg.validate(), StreamError);
  cfg = ScenarioConfig::builtin("fog");
  cfg.sender_server.loss = 1.5;
  CHECK_THROWS_AS(cfg.validate(), StreamError);
  cfg = ScenarioConfig::builtin("fog");
  cfg.outage_min_ms = 300;
  cfg.outage_max_ms = 100;
  CHECK_THROWS_AS(cfg.validate(), StreamError);
  cfg = ScenarioConfig::builtin("fog");
  cfg.keepalive_interval_ms = 5000;
  CHECK_THROWS_AS(cfg.validate(), StreamError);
}

TEST_CASE("resolve dispatches between builtin names and files") {
  CHECK(ScenarioConfig::resolve("cloud").name == "cloud");
  CHECK_THROWS_AS(ScenarioConfig::resolve("no_such_file.cfg"), StreamError);
}
