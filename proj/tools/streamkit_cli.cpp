// streamkit command line: run a role over real sockets, run a whole
// scenario in-process under virtual time, or render the report tables from
// an artifact directory. Talks to the library strictly through the C API.
#include <csignal>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "streamkit.h"

namespace {

sk_role* g_active_role = nullptr;

void handle_signal(int) {
  if (g_active_role != nullptr) sk_role_request_stop(g_active_role);
}

int fail(sk_status st, const char* doing) {
  std::fprintf(stderr, "streamkit: %s failed: %s", doing, sk_status_name(st));
  const char* detail = sk_last_error();
  if (detail != nullptr && detail[0] != '\0') std::fprintf(stderr, " (%s)", detail);
  std::fputc('\n', stderr);
  return 1;
}

int run_role(const std::string& role, const std::string& config) {
  sk_role* handle = nullptr;
  if (sk_status st = sk_role_open(role.c_str(), config.c_str(), &handle); st != SK_OK)
    return fail(st, role.c_str());
  g_active_role = handle;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  const sk_status st = sk_role_run(handle);
  g_active_role = nullptr;
  sk_role_close(handle);
  if (st != SK_OK) return fail(st, role.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"handover-resilient low-latency streaming toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::string scenario = "fog";
  std::string scenario_file;
  std::string out_dir = "out";
  std::string artifact_dir;
  uint64_t seed = 0;
  double duration_s = 0;

  auto add_role = [&](const char* name, const char* desc) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--config", config, "role config file")->required();
    return cmd;
  };
  CLI::App* sender = add_role("sender", "run the stream sender (real UDP)");
  CLI::App* server = add_role("server", "run the relay server (real UDP)");
  CLI::App* receiver = add_role("receiver", "run the stream receiver (real UDP)");

  CLI::App* experiment =
      app.add_subcommand("experiment", "run a full scenario in-process (virtual time)");
  experiment->add_option("scenario", scenario, "fog | cloud | handover | scenario file");
  experiment->add_option("--scenario-file", scenario_file, "explicit scenario file path");
  experiment->add_option("--seed", seed, "PRNG seed");
  experiment->add_option("--duration-s", duration_s, "streaming duration in seconds");
  experiment->add_option("--out-dir", out_dir, "artifact output directory");

  CLI::App* report = app.add_subcommand("report", "render tables from an artifact dir");
  report->add_option("artifact-dir", artifact_dir, "directory with the CSV artifacts")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (sender->parsed()) return run_role("sender", config);
  if (server->parsed()) return run_role("server", config);
  if (receiver->parsed()) return run_role("receiver", config);

  if (experiment->parsed()) {
    const std::string& which = scenario_file.empty() ? scenario : scenario_file;
    sk_experiment* exp = nullptr;
    if (sk_status st = sk_experiment_open(which.c_str(), &exp); st != SK_OK)
      return fail(st, "experiment open");
    sk_experiment_set_seed(exp, seed);
    if (duration_s > 0) {
      if (sk_status st = sk_experiment_set_duration(exp, duration_s); st != SK_OK) {
        sk_experiment_close(exp);
        return fail(st, "experiment duration");
      }
    }
    const sk_status st = sk_experiment_run(exp, out_dir.c_str());
    sk_experiment_close(exp);
    if (st != SK_OK) return fail(st, "experiment run");
    std::printf("artifacts written to %s\n", out_dir.c_str());

    char* text = nullptr;
    if (sk_report_render(out_dir.c_str(), &text) == SK_OK) {
      std::fputs(text, stdout);
      sk_text_free(text);
    }
    return 0;
  }

  if (report->parsed()) {
    char* text = nullptr;
    if (sk_status st = sk_report_render(artifact_dir.c_str(), &text); st != SK_OK)
      return fail(st, "report");
    std::fputs(text, stdout);
    sk_text_free(text);
    return 0;
  }
  return 1;
}
