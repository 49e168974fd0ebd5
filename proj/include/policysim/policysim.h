#ifndef POLICYSIM_H
#define POLICYSIM_H

/* C interface of the policysim library.
 *
 * Every function returns a ps_status. On failure, ps_last_error() gives a
 * message for the calling thread until its next call into the library.
 * Strings returned through char** are owned by the caller and released with
 * ps_string_free. Handles are released with their destroy function; passing
 * NULL to a destroy function is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PS_API __declspec(dllexport)
#else
#define PS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ps_status {
  PS_OK = 0,
  PS_ERR_INVALID_ARGUMENT = 1,
  PS_ERR_UNKNOWN_ID = 2,
  PS_ERR_SHAPE = 3,
  PS_ERR_COMPONENT = 4,
  PS_ERR_EMPTY_POOL = 5,
  PS_ERR_TEMPLATE = 6,
  PS_ERR_PARSE = 7,
  PS_ERR_CONFIG = 8,
  PS_ERR_BACKEND = 9,
  PS_ERR_CORRUPT_LOG = 10,
  PS_ERR_IO = 11,
  PS_ERR_INTERNAL = 12
} ps_status;

typedef struct ps_simulation ps_simulation;
typedef struct ps_replay ps_replay;

PS_API const char* ps_last_error(void);
PS_API const char* ps_status_name(ps_status status);
PS_API const char* ps_version(void);
PS_API void ps_string_free(char* s);

/* Simulation. config_json is a run config document; NULL or "{}" uses the
 * defaults. */
PS_API ps_status ps_simulation_create(const char* config_json, ps_simulation** out);
PS_API ps_status ps_simulation_create_from_file(const char* config_path, ps_simulation** out);
/* Continues from a checkpoint directory (snapshot.json + events.jsonl). */
PS_API ps_status ps_simulation_resume(const char* checkpoint_dir, ps_simulation** out);
PS_API ps_status ps_simulation_step(ps_simulation* sim);
PS_API ps_status ps_simulation_run(ps_simulation* sim);
PS_API ps_status ps_simulation_next_round(const ps_simulation* sim, int* out);
PS_API ps_status ps_simulation_finished(const ps_simulation* sim, int* out);
PS_API ps_status ps_simulation_write_log(const ps_simulation* sim, const char* path);
PS_API ps_status ps_simulation_log_text(const ps_simulation* sim, char** out);
PS_API ps_status ps_simulation_write_checkpoint(const ps_simulation* sim, const char* dir);
/* JSON array of per-round metrics. */
PS_API ps_status ps_simulation_metrics_json(const ps_simulation* sim, char** out);
PS_API void ps_simulation_destroy(ps_simulation* sim);

/* Replay of an event log without any backend. */
PS_API ps_status ps_replay_open(const char* log_path, ps_replay** out);
PS_API ps_status ps_replay_from_text(const char* log_text, ps_replay** out);
PS_API ps_status ps_replay_metrics_json(const ps_replay* replay, char** out);
PS_API ps_status ps_replay_metrics_csv(const ps_replay* replay, char** out);
/* {"rounds", "agents", "posts", "edges", "last_seq", "stances": {user: smoothed}} */
PS_API ps_status ps_replay_summary_json(const ps_replay* replay, char** out);
PS_API void ps_replay_destroy(ps_replay* replay);

/* Belief-averaging check on `trials` connected random graphs. Writes a JSON
 * report with one entry per trial. */
PS_API ps_status ps_verify_abm(size_t nodes, uint64_t seed, double edge_probability, int trials, char** report);

/* Ingests a metadata directory with the scripted backend's heuristic
 * profiles. When out_path is non-NULL the population (profiles, edges,
 * historical posts) is written there as JSON. The report lists counts,
 * errors and warnings. */
PS_API ps_status ps_ingest(const char* meta_dir, const char* out_path, char** report);

/* Training corpora from a simulation log. Tuples come from tuples_path when
 * non-NULL, otherwise from the log's reactions; profiles come from the log
 * header. */
PS_API ps_status ps_export_sft(const char* log_path, const char* tuples_path, const char* out_path, char** report);
PS_API ps_status ps_export_dpo(const char* log_path, const char* tuples_path, const char* out_path, size_t negatives,
                               double similarity_threshold, uint64_t seed, char** report);

/* Synthetic bandit benchmark. options_json may set dim, arms, rounds, noise,
 * weight_norm, seeds, base_seed, hidden, learning_rate, epsilon. */
PS_API ps_status ps_bench_bandit(const char* options_json, char** result);

#ifdef __cplusplus
}
#endif

#endif /* POLICYSIM_H */
