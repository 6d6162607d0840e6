/* streamkit: handover-resilient low-latency streaming toolkit.
 *
 * C API of the shared library. Handles are opaque; every call returns an
 * sk_status. On failure, sk_last_error() describes the most recent error on
 * the calling thread.
 */
#ifndef STREAMKIT_H
#define STREAMKIT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sk_status {
  SK_OK = 0,
  SK_ERR_INVALID_ARG = 1,
  SK_ERR_CONFIG = 2,
  SK_ERR_IO = 3,
  SK_ERR_MALFORMED = 4,
  SK_ERR_SCHEMA = 5,
  SK_ERR_TIMEOUT = 6,
  SK_ERR_INTERNAL = 7
} sk_status;

const char* sk_status_name(sk_status status);
const char* sk_version(void);

/* Thread-local message for the last failing call. */
const char* sk_last_error(void);

/* ---- virtual-time experiments ------------------------------------- */

typedef struct sk_experiment sk_experiment;

/* `scenario` is a builtin name (fog | cloud | handover) or the path of a
 * scenario file. */
sk_status sk_experiment_open(const char* scenario, sk_experiment** out);
sk_status sk_experiment_set_seed(sk_experiment* exp, uint64_t seed);
/* Streaming duration in seconds; overrides the scenario's value. */
sk_status sk_experiment_set_duration(sk_experiment* exp, double seconds);
/* Runs the scenario and writes frames.csv, recovery.csv, summary.csv,
 * sync.csv and report.txt into out_dir. */
sk_status sk_experiment_run(sk_experiment* exp, const char* out_dir);
void sk_experiment_close(sk_experiment* exp);

/* ---- reporting ------------------------------------------------------ */

/* Renders the latency / accounting / recovery tables from an artifact
 * directory. *text_out is heap-allocated; free with sk_text_free. */
sk_status sk_report_render(const char* artifact_dir, char** text_out);
void sk_text_free(char* text);

/* ---- real-socket roles ---------------------------------------------- */

typedef struct sk_role sk_role;

/* role_name is sender | server | receiver; config_path points at the
 * key = value config file. */
sk_status sk_role_open(const char* role_name, const char* config_path, sk_role** out);
/* Blocks until sk_role_request_stop or a fatal error. */
sk_status sk_role_run(sk_role* role);
/* Async-signal-safe stop request. */
void sk_role_request_stop(sk_role* role);
void sk_role_close(sk_role* role);

#ifdef __cplusplus
}
#endif

#endif /* STREAMKIT_H */
