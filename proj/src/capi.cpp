#include "streamkit.h"

#include <cstring>
#include <string>

#include "streamkit/config.hpp"
#include "streamkit/experiment.hpp"
#include "streamkit/report.hpp"
#include "streamkit/runtime.hpp"

using streamkit::Errc;
using streamkit::StreamError;

namespace {

thread_local std::string g_last_error;

sk_status status_of(Errc code) {
  switch (code) {
    case Errc::config_error: return SK_ERR_CONFIG;
    case Errc::io_error: return SK_ERR_IO;
    case Errc::schema_mismatch: return SK_ERR_SCHEMA;
    case Errc::recovery_timeout: return SK_ERR_TIMEOUT;
    case Errc::malformed_bitstream:
    case Errc::malformed_message:
    case Errc::truncated_packet:
    case Errc::bad_version: return SK_ERR_MALFORMED;
    default: return SK_ERR_INTERNAL;
  }
}

template <typename Fn>
sk_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SK_OK;
  } catch (const StreamError& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SK_ERR_INTERNAL;
  }
}

}  // namespace

struct sk_experiment {
  streamkit::ScenarioConfig scenario;
};

struct sk_role {
  streamkit::RoleRunner runner;
  sk_role(const char* role, const char* config) : runner(role, config) {}
};

extern "C" {

const char* sk_status_name(sk_status status) {
  switch (status) {
    case SK_OK: return "ok";
    case SK_ERR_INVALID_ARG: return "invalid argument";
    case SK_ERR_CONFIG: return "configuration error";
    case SK_ERR_IO: return "i/o error";
    case SK_ERR_MALFORMED: return "malformed input";
    case SK_ERR_SCHEMA: return "schema mismatch";
    case SK_ERR_TIMEOUT: return "timeout";
    case SK_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* sk_version(void) { return "0.1.0"; }

const char* sk_last_error(void) { return g_last_error.c_str(); }

sk_status sk_experiment_open(const char* scenario, sk_experiment** out) {
  if (scenario == nullptr || out == nullptr) return SK_ERR_INVALID_ARG;
  *out = nullptr;
  sk_experiment* handle = nullptr;
  sk_status st = guarded([&] {
    handle = new sk_experiment{streamkit::ScenarioConfig::resolve(scenario)};
  });
  if (st == SK_OK) *out = handle;
  return st;
}

sk_status sk_experiment_set_seed(sk_experiment* exp, uint64_t seed) {
  if (exp == nullptr) return SK_ERR_INVALID_ARG;
  exp->scenario.seed = seed;
  return SK_OK;
}

sk_status sk_experiment_set_duration(sk_experiment* exp, double seconds) {
  if (exp == nullptr) return SK_ERR_INVALID_ARG;
  if (seconds <= 0) {
    g_last_error = "duration must be positive";
    return SK_ERR_CONFIG;
  }
  exp->scenario.duration_s = seconds;
  return SK_OK;
}

sk_status sk_experiment_run(sk_experiment* exp, const char* out_dir) {
  if (exp == nullptr || out_dir == nullptr) return SK_ERR_INVALID_ARG;
  return guarded([&] { streamkit::run_experiment(exp->scenario, out_dir); });
}

void sk_experiment_close(sk_experiment* exp) { delete exp; }

sk_status sk_report_render(const char* artifact_dir, char** text_out) {
  if (artifact_dir == nullptr || text_out == nullptr) return SK_ERR_INVALID_ARG;
  *text_out = nullptr;
  return guarded([&] {
    const std::string text = streamkit::render_report(artifact_dir);
    char* buf = static_cast<char*>(::malloc(text.size() + 1));
    if (buf == nullptr) throw StreamError(Errc::io_error, "out of memory");
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *text_out = buf;
  });
}

void sk_text_free(char* text) { ::free(text); }

sk_status sk_role_open(const char* role_name, const char* config_path, sk_role** out) {
  if (role_name == nullptr || config_path == nullptr || out == nullptr)
    return SK_ERR_INVALID_ARG;
  *out = nullptr;
  sk_role* handle = nullptr;
  sk_status st = guarded([&] { handle = new sk_role(role_name, config_path); });
  if (st == SK_OK) *out = handle;
  return st;
}

sk_status sk_role_run(sk_role* role) {
  if (role == nullptr) return SK_ERR_INVALID_ARG;
  return guarded([&] { role->runner.run(); });
}

void sk_role_request_stop(sk_role* role) {
  if (role != nullptr) role->runner.request_stop();
}

void sk_role_close(sk_role* role) { delete role; }

}  // extern "C"
